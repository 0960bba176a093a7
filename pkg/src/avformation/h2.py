"""Dense Lyapunov/Riccati solvers and H2 controller synthesis.

The synthesis path is: continuous algebraic Riccati equation solved by
stable-invariant-subspace extraction from the Hamiltonian matrix (ordered
real Schur form), polished by Newton-Kleinman iteration, each step one
Bartels-Stewart Lyapunov solve. Two independent routes to the closed-loop
H2 value (observability Gramian and frequency-domain quadrature) serve as
cross-checks.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.integrate
import scipy.linalg

from .errors import (
    ConvergenceError,
    InstabilityError,
    NumericsError,
    QuadratureError,
    SpectrumError,
    StabilizabilityError,
)
from .traffic import ReducedRealization

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class SolverOptions:
    newton_max_iter: int = 25
    residual_tol: float = 1e-9
    hurwitz_margin: float = 1e-9

    def __post_init__(self):
        if self.residual_tol <= 0:
            raise ValueError("residual_tol must be positive")
        if self.hurwitz_margin < 0:
            raise ValueError("hurwitz_margin must be nonnegative")


DEFAULT_OPTIONS = SolverOptions()


@dataclass
class H2Synthesis:
    """Riccati solution P, optimal gain K and the optimal squared H2 norm."""

    P: np.ndarray
    K: np.ndarray
    value: float


def spectral_abscissa(a: np.ndarray) -> float:
    """Largest real part over the eigenvalues of a."""
    return float(np.max(np.linalg.eigvals(a).real))


def _as_square(a, name: str) -> np.ndarray:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {a.shape}")
    return a


def solve_lyapunov(a, w) -> np.ndarray:
    """Solve a X + X a^T + w = 0 for symmetric w and Hurwitz a.

    Bartels-Stewart: reduce a to complex Schur form, solve the transformed
    triangular equation column by column, transform back. The result is
    symmetrized and checked against a relative residual of 1e-9.
    """
    a = _as_square(a, "a")
    w = _as_square(w, "w")
    if a.shape != w.shape:
        raise ValueError("a and w must have matching shapes")
    if not np.allclose(w, w.T, rtol=0, atol=1e-10 * max(1.0, np.abs(w).max())):
        raise ValueError("w must be symmetric")

    m = a.shape[0]
    t, u = scipy.linalg.schur(a, output="complex")
    eigs = np.diag(t)
    if np.max(eigs.real) >= 0.0:
        raise SpectrumError(
            f"a is not Hurwitz (max Re eig = {np.max(eigs.real):.3e}); "
            "Lyapunov equation has no stable solution"
        )

    # a X + X a^T + w = 0  ->  t y + y t^H = -u^H w u  with X = u y u^H
    c = -(u.conj().T @ w @ u)
    y = np.zeros((m, m), dtype=complex)
    eye = np.eye(m)
    for j in range(m - 1, -1, -1):
        rhs = c[:, j]
        if j + 1 < m:
            rhs = rhs - y[:, j + 1:] @ np.conj(t[j, j + 1:])
        y[:, j] = scipy.linalg.solve_triangular(
            t + np.conj(t[j, j]) * eye, rhs, lower=False
        )
    x = (u @ y @ u.conj().T).real
    x = 0.5 * (x + x.T)

    w_norm = np.linalg.norm(w)
    residual = np.linalg.norm(a @ x + x @ a.T + w)
    if w_norm > 0 and residual / w_norm > 1e-9:
        gaps = np.abs(eigs[:, None] + np.conj(eigs)[None, :])
        raise NumericsError(
            f"Lyapunov residual {residual / w_norm:.3e} exceeds 1e-9; "
            f"smallest eigenvalue-pair separation {gaps.min():.3e}"
        )
    return x


def solve_care(a, b, q, r, opts: SolverOptions = DEFAULT_OPTIONS) -> np.ndarray:
    """Stabilizing solution of a^T P + P a - P b r^-1 b^T P + q = 0.

    Extracts the stable invariant subspace of the 2m x 2m Hamiltonian via
    an ordered real Schur decomposition, then refines with Newton-Kleinman
    steps until the relative residual meets opts.residual_tol.

    Raises SpectrumError when the Hamiltonian has eigenvalues within 1e-10
    of the imaginary axis (the equation is then numerically ill posed) and
    StabilizabilityError when no m-dimensional stable graph subspace exists.
    """
    a = _as_square(a, "a")
    q = _as_square(q, "q")
    b = np.atleast_2d(np.asarray(b, dtype=float))
    r = _as_square(r, "r")
    m = a.shape[0]
    if b.shape[0] != m:
        raise ValueError("b must have as many rows as a")
    if r.shape[0] != b.shape[1]:
        raise ValueError("r must match the number of inputs")

    b_rinv_bt = b @ np.linalg.solve(r, b.T)
    ham = np.block([[a, -b_rinv_bt], [-q, -a.T]])

    ham_eigs = np.linalg.eigvals(ham)
    closest = float(np.min(np.abs(ham_eigs.real)))
    if closest < 1e-10:
        raise SpectrumError(
            f"Hamiltonian eigenvalue within {closest:.2e} of the imaginary "
            "axis; refusing to extract a dubious stabilizing solution"
        )

    try:
        _, z, sdim = scipy.linalg.schur(ham, output="real", sort="lhp")
    except scipy.linalg.LinAlgError as exc:
        raise NumericsError(f"ordered Schur decomposition failed: {exc}") from exc
    if sdim != m:
        raise StabilizabilityError(
            f"stable invariant subspace has dimension {sdim}, expected {m}; "
            "(a, b) is not stabilizable"
        )

    u1 = z[:m, :m]
    u2 = z[m:, :m]
    if np.linalg.cond(u1) > 1.0 / (_EPS ** 0.75):
        raise StabilizabilityError(
            "stable subspace is not a graph over the state space; "
            "(a, b) is likely unstabilizable or the problem is ill posed"
        )
    p = np.linalg.solve(u1.T, u2.T).T
    p = 0.5 * (p + p.T)

    q_norm = np.linalg.norm(q)
    scale = q_norm if q_norm > 0 else 1.0
    residual = np.inf
    for _ in range(opts.newton_max_iter):
        gain = np.linalg.solve(r, b.T @ p)
        residual = np.linalg.norm(a.T @ p + p @ a - p @ b @ gain + q) / scale
        if residual <= opts.residual_tol:
            return p
        a_cl = a - b @ gain
        if spectral_abscissa(a_cl) >= 0.0:
            raise ConvergenceError(
                "Newton-Kleinman iterate lost the stabilizing property"
            )
        p = solve_lyapunov(a_cl.T, q + gain.T @ r @ gain)
    raise ConvergenceError(
        f"Newton-Kleinman stalled at relative residual {residual:.3e} "
        f"(tolerance {opts.residual_tol:.1e})"
    )


def care_residual(a, b, q, r, p) -> float:
    """Relative Riccati residual of a candidate solution p."""
    gain = np.linalg.solve(r, b.T @ p)
    scale = np.linalg.norm(q) or 1.0
    return float(np.linalg.norm(a.T @ p + p @ a - p @ b @ gain + q) / scale)


def synthesize(rr: ReducedRealization, opts: SolverOptions = DEFAULT_OPTIONS) -> H2Synthesis:
    """Globally optimal state feedback for the reduced realization.

    Returns the Riccati solution P, the gain K = R^-1 B^T P and the optimal
    squared H2 norm trace(H^T P H) of the disturbance-to-output channel.
    """
    p = solve_care(rr.A, rr.B, rr.Q, rr.R, opts)
    gain = np.linalg.solve(rr.R, rr.B.T @ p)
    a_cl = rr.A - rr.B @ gain
    margin = spectral_abscissa(a_cl)
    if margin >= -opts.hurwitz_margin:
        raise InstabilityError(
            f"synthesized closed loop has spectral abscissa {margin:.3e}, "
            f"above the -{opts.hurwitz_margin:.0e} margin"
        )
    value = float(np.trace(rr.H.T @ p @ rr.H))
    return H2Synthesis(P=p, K=gain, value=value)


def closed_loop_h2(rr: ReducedRealization, gain: np.ndarray) -> float:
    """Squared H2 norm of the closed loop under an arbitrary stabilizing gain.

    Solves the observability Lyapunov equation of A - B K with the output
    weight Q + K^T R K and returns trace(H^T P_o H). Independent of the
    Riccati path except for sharing the Lyapunov solver.
    """
    gain = np.atleast_2d(np.asarray(gain, dtype=float))
    a_cl = rr.A - rr.B @ gain
    if spectral_abscissa(a_cl) >= 0.0:
        raise InstabilityError("closed loop is not Hurwitz; H2 norm is infinite")
    p_obs = solve_lyapunov(a_cl.T, rr.Q + gain.T @ rr.R @ gain)
    return float(np.trace(rr.H.T @ p_obs @ rr.H))


def h2_quadrature(rr: ReducedRealization, gain: np.ndarray, rel_tol: float = 1e-6) -> float:
    """Frequency-domain oracle for the squared H2 norm.

    Evaluates (1/pi) * integral over [0, inf) of ||G(jw)||_F^2 by adaptive
    quadrature on a finite interval plus the analytic O(1/w) tail of the
    strictly proper integrand. Agrees with closed_loop_h2 to ~1e-4 relative
    for moderate state dimensions; used purely as a cross-check.
    """
    gain = np.atleast_2d(np.asarray(gain, dtype=float))
    a_cl = rr.A - rr.B @ gain
    if spectral_abscissa(a_cl) >= 0.0:
        raise InstabilityError("closed loop is not Hurwitz; H2 norm is infinite")
    m_cost = rr.Q + gain.T @ rr.R @ gain
    h = rr.H
    m = a_cl.shape[0]
    eye = np.eye(m)

    def integrand(omega: float) -> float:
        x = np.linalg.solve(1j * omega * eye - a_cl, h)
        return float(np.real(np.sum(np.conj(x) * (m_cost @ x))))

    scale = max(1.0, float(np.linalg.norm(a_cl, 2)))
    omega_mid = 20.0 * scale
    omega_max = 1e4 * scale

    with warnings.catch_warnings():
        warnings.simplefilter("error", scipy.integrate.IntegrationWarning)
        try:
            part1, err1 = scipy.integrate.quad(
                integrand, 0.0, omega_mid, limit=400, epsabs=0.0, epsrel=1e-9
            )
            part2, err2 = scipy.integrate.quad(
                integrand, omega_mid, omega_max, limit=400, epsabs=0.0, epsrel=1e-9
            )
        except scipy.integrate.IntegrationWarning as exc:
            raise QuadratureError(f"adaptive quadrature did not converge: {exc}") from exc

    # Strictly proper G: ||G(jw)||_F^2 -> trace(H^T M H)/w^2, and the 1/w^3
    # trace term cancels, so truncation beyond omega_max is O(1/omega_max^3).
    tail_lead = float(np.trace(h.T @ m_cost @ h))
    tail = tail_lead / omega_max
    value = (part1 + part2 + tail) / np.pi
    err_est = (err1 + err2 + tail * (3.0 * scale / omega_max) ** 2) / np.pi
    if value > 1e-300 and err_est / value > rel_tol:
        raise QuadratureError(
            f"quadrature error estimate {err_est:.3e} exceeds "
            f"{rel_tol:.1e} relative ({err_est / value:.3e} of the value)"
        )
    return value
