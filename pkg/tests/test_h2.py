import math

import numpy as np
import pytest

from avformation import (
    Formation,
    InstabilityError,
    SolverOptions,
    SpectrumError,
    StabilizabilityError,
    build_reduced,
    closed_loop_h2,
    h2_quadrature,
    solve_care,
    solve_lyapunov,
    spectral_abscissa,
    synthesize,
)
from avformation.h2 import care_residual
from avformation.traffic import ReducedRealization


def lyapunov_kronecker_oracle(a, w):
    """Solve a X + X a^T + w = 0 as one dense linear system in vec(X)."""
    m = a.shape[0]
    lhs = np.kron(np.eye(m), a) + np.kron(a, np.eye(m))
    x = np.linalg.solve(lhs, -w.flatten(order="F"))
    return x.reshape((m, m), order="F")


def random_hurwitz(rng, m, margin=0.5):
    a = rng.normal(size=(m, m))
    shift = spectral_abscissa(a)
    return a - (shift + margin) * np.eye(m)


def scalar_realization(a, b, h, q, r):
    """1-state ReducedRealization for closed-form checks."""
    return ReducedRealization(
        A=np.array([[a]]), B=np.array([[b]]), H=np.array([[h]]),
        Q=np.array([[q]]), R=np.array([[r]]),
        T=np.eye(1), E=np.eye(1),
    )


class TestLyapunov:
    def test_scalar(self):
        np.testing.assert_allclose(solve_lyapunov([[-1.0]], [[2.0]]), [[1.0]])
        np.testing.assert_allclose(solve_lyapunov([[-1.0]], [[0.0]]), [[0.0]])

    def test_two_by_two_against_kronecker(self):
        a = np.array([[-1.0, 1.0], [0.0, -2.0]])
        w = np.eye(2)
        x = solve_lyapunov(a, w)
        np.testing.assert_allclose(x, lyapunov_kronecker_oracle(a, w), rtol=1e-12)
        np.testing.assert_allclose(a @ x + x @ a.T + w, np.zeros((2, 2)), atol=1e-13)

    @pytest.mark.parametrize("m", [3, 5, 8, 12])
    def test_random_against_kronecker(self, m):
        rng = np.random.default_rng(m)
        for _ in range(5):
            a = random_hurwitz(rng, m)
            g = rng.normal(size=(m, m))
            w = g + g.T
            x = solve_lyapunov(a, w)
            np.testing.assert_allclose(x, lyapunov_kronecker_oracle(a, w),
                                       rtol=1e-8, atol=1e-10)
            resid = np.linalg.norm(a @ x + x @ a.T + w) / np.linalg.norm(w)
            assert resid <= 1e-9
            np.testing.assert_allclose(x, x.T, atol=1e-12)

    def test_rejects_unstable(self):
        with pytest.raises(SpectrumError):
            solve_lyapunov([[1.0]], [[1.0]])
        with pytest.raises(SpectrumError):
            solve_lyapunov([[0.0]], [[1.0]])

    def test_rejects_asymmetric_w(self):
        with pytest.raises(ValueError):
            solve_lyapunov(np.diag([-1.0, -2.0]), np.array([[0.0, 1.0], [0.0, 0.0]]))


class TestCare:
    def test_scalar_origin_plant(self):
        # p^2 = q r with a = 0:  p = 1
        p = solve_care([[0.0]], [[1.0]], [[1.0]], [[1.0]])
        np.testing.assert_allclose(p, [[1.0]], rtol=1e-12)

    def test_scalar_unstable_plant(self):
        # 2p - p^2 + 2 = 0  ->  p = 1 + sqrt(3)
        p = solve_care([[1.0]], [[1.0]], [[2.0]], [[1.0]])
        np.testing.assert_allclose(p, [[1.0 + math.sqrt(3.0)]], rtol=1e-12)

    def test_zero_input_matrix_reduces_to_lyapunov(self):
        # stable plant, no actuation: -2p + 1 = 0
        p = solve_care([[-1.0]], [[0.0]], [[1.0]], [[1.0]])
        np.testing.assert_allclose(p, [[0.5]], rtol=1e-12)

    def test_unstabilizable_plant_rejected(self):
        with pytest.raises(StabilizabilityError):
            solve_care([[1.0]], [[0.0]], [[1.0]], [[1.0]])

    def test_imaginary_axis_hamiltonian_rejected(self):
        with pytest.raises(SpectrumError):
            solve_care([[0.0]], [[0.0]], [[1.0]], [[1.0]])

    @pytest.mark.parametrize("m,k", [(4, 1), (6, 2), (10, 3)])
    def test_random_systems_residual_and_stability(self, m, k):
        rng = np.random.default_rng(m * 10 + k)
        for _ in range(5):
            a = rng.normal(size=(m, m))
            b = rng.normal(size=(m, k))
            g = rng.normal(size=(m, m))
            q = g @ g.T + 0.1 * np.eye(m)
            r = np.diag(rng.uniform(0.5, 2.0, size=k))
            p = solve_care(a, b, q, r)
            assert care_residual(a, b, q, r, p) <= 1e-9
            assert np.all(np.linalg.eigvalsh(p) > -1e-10)
            gain = np.linalg.solve(r, b.T @ p)
            assert spectral_abscissa(a - b @ gain) < 0.0

    def test_options_validation(self):
        with pytest.raises(ValueError):
            SolverOptions(residual_tol=0.0)
        with pytest.raises(ValueError):
            SolverOptions(hurwitz_margin=-1.0)


class TestSynthesize:
    def test_all_autonomous_pair(self, default_weights):
        from avformation import LinearHdvCoeffs

        c = LinearHdvCoeffs(1.0, 2.0, 1.0)  # unused rows: every vehicle is autonomous
        rr = build_reduced(c, Formation(2, (1, 2)), default_weights)
        result = synthesize(rr)
        assert spectral_abscissa(rr.A - rr.B @ result.K) < -1e-9
        assert result.value > 0.0
        assert np.linalg.norm(result.K) > 0.0

    def test_gain_matches_riccati_solution(self, typical_coeffs, default_weights):
        rr = build_reduced(typical_coeffs, Formation(6, (1, 4)), default_weights)
        result = synthesize(rr)
        np.testing.assert_allclose(
            result.K, np.linalg.solve(rr.R, rr.B.T @ result.P), rtol=1e-12
        )
        assert result.value == pytest.approx(float(np.trace(rr.H.T @ result.P @ rr.H)))
        assert np.all(np.linalg.eigvalsh(result.P) > 0.0)

    def test_riccati_residual_on_traffic_systems(self, typical_coeffs, default_weights):
        for members in [(1,), (1, 4), (1, 2, 3), (2, 5, 8)]:
            rr = build_reduced(typical_coeffs, Formation(8, members), default_weights)
            result = synthesize(rr)
            assert care_residual(rr.A, rr.B, rr.Q, rr.R, result.P) <= 1e-8

    def test_deterministic(self, typical_coeffs, default_weights):
        rr = build_reduced(typical_coeffs, Formation(6, (2, 5)), default_weights)
        first = synthesize(rr)
        second = synthesize(rr)
        np.testing.assert_array_equal(first.P, second.P)
        np.testing.assert_array_equal(first.K, second.K)
        assert first.value == second.value


class TestClosedLoopH2:
    def test_scalar_open_loop_gramian(self):
        # x' = -x, unit output and disturbance, no control: energy 1/2
        rr = scalar_realization(a=-1.0, b=1.0, h=1.0, q=1.0, r=1.0)
        assert closed_loop_h2(rr, np.zeros((1, 1))) == pytest.approx(0.5, rel=1e-12)

    def test_matches_synthesis_value_at_optimum(self, typical_coeffs, default_weights):
        rr = build_reduced(typical_coeffs, Formation(6, (1, 4)), default_weights)
        result = synthesize(rr)
        assert closed_loop_h2(rr, result.K) == pytest.approx(result.value, rel=1e-10)

    def test_perturbed_gain_never_beats_optimum(self, typical_coeffs, default_weights):
        rr = build_reduced(typical_coeffs, Formation(6, (1, 4)), default_weights)
        result = synthesize(rr)
        rng = np.random.default_rng(0)
        for norm in (1e-3, 1e-2):
            for _ in range(50):
                delta = rng.normal(size=result.K.shape)
                delta *= norm / np.linalg.norm(delta)
                value = closed_loop_h2(rr, result.K + delta)
                assert value >= result.value - 1e-9

    def test_rejects_destabilizing_gain(self):
        rr = scalar_realization(a=-1.0, b=1.0, h=1.0, q=1.0, r=1.0)
        with pytest.raises(InstabilityError):
            closed_loop_h2(rr, np.array([[-5.0]]))


class TestQuadratureOracle:
    def test_scalar_value(self):
        rr = scalar_realization(a=-1.0, b=1.0, h=1.0, q=1.0, r=1.0)
        assert h2_quadrature(rr, np.zeros((1, 1))) == pytest.approx(0.5, abs=1e-6)

    def test_vanishing_output_weights(self):
        rr = scalar_realization(a=-1.0, b=1.0, h=1.0, q=0.0, r=1.0)
        assert h2_quadrature(rr, np.zeros((1, 1))) == pytest.approx(0.0, abs=1e-12)

    def test_agrees_with_gramian_on_traffic_system(self, typical_coeffs, default_weights):
        rr = build_reduced(typical_coeffs, Formation(3, (1,)), default_weights)
        result = synthesize(rr)
        gramian = closed_loop_h2(rr, result.K)
        quad = h2_quadrature(rr, result.K)
        assert quad == pytest.approx(gramian, rel=1e-4)

    def test_agrees_for_suboptimal_gain(self, typical_coeffs, default_weights):
        rr = build_reduced(typical_coeffs, Formation(4, (2,)), default_weights)
        gain = synthesize(rr).K * 1.3
        assert h2_quadrature(rr, gain) == pytest.approx(closed_loop_h2(rr, gain), rel=1e-4)
