"""Ring-road mixed traffic model.

Builds the optimal velocity model (OVM) for human-driven vehicles, its
linearization about an equilibrium, the full mixed-traffic state-space
matrices for a given placement of autonomous vehicles, and the minimal
reduced realization on which all controller synthesis runs.

Vehicles are indexed 1..n; vehicle i follows vehicle i-1 and vehicle 1
follows vehicle n. The full state is x = [s_1..s_n, v_1..v_n] in error
coordinates about the equilibrium (s*, v*).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateEquilibriumError


@dataclass(frozen=True)
class HdvParams:
    """Nonlinear OVM parameters of a human driver."""

    alpha: float  # sensitivity to the desired-velocity error (1/s)
    beta: float   # sensitivity to the relative velocity (1/s)
    v_max: float  # free-flow speed (m/s)
    s_st: float   # standstill spacing (m)
    s_go: float   # free-flow spacing (m)

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ConfigError("driver sensitivities alpha, beta must be positive")
        if self.v_max <= 0:
            raise ConfigError("v_max must be positive")
        if not self.s_st < self.s_go:
            raise ConfigError("standstill spacing must be below free-flow spacing")


@dataclass(frozen=True)
class LinearHdvCoeffs:
    """Coefficients of the linearized HDV model: dv = a1*s - a2*v + a3*v_prev."""

    alpha1: float
    alpha2: float
    alpha3: float

    def __post_init__(self):
        if self.alpha1 <= 0:
            raise ConfigError("alpha1 must be positive")
        if not self.alpha2 > self.alpha3 > 0:
            raise ConfigError("realistic driving requires alpha2 > alpha3 > 0")


@dataclass(frozen=True)
class Equilibrium:
    """Uniform-flow equilibrium: every vehicle at spacing s_star, speed v_star."""

    s_star: float
    v_star: float


@dataclass(frozen=True)
class Formation:
    """Placement of autonomous vehicles on the ring: a set of indices in 1..n.

    An empty member tuple describes a pure-HDV ring; it can be simulated
    but not evaluated (the H2 value is infinite without actuators).
    """

    n: int
    members: tuple[int, ...]

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("ring must contain at least one vehicle")
        if len(set(self.members)) != len(self.members):
            raise ConfigError("formation members must be distinct")
        if any(not 1 <= i <= self.n for i in self.members):
            raise ConfigError(f"formation members must lie in 1..{self.n}")
        if tuple(sorted(self.members)) != self.members:
            raise ConfigError("formation members must be strictly increasing")

    @property
    def k(self) -> int:
        return len(self.members)

    def label(self) -> str:
        """Serialized form used in CSV output, e.g. '1-4-7-10'."""
        return "-".join(str(i) for i in self.members)

    @classmethod
    def from_label(cls, n: int, label: str) -> "Formation":
        try:
            members = tuple(sorted(int(tok) for tok in label.split("-") if tok))
        except ValueError as exc:
            raise ConfigError(f"cannot parse formation label {label!r}") from exc
        return cls(n, members)


@dataclass(frozen=True)
class PerformanceWeights:
    """Penalties on spacing error, velocity error and control effort.

    The weights enter the quadratic cost directly: the state cost matrix is
    diag(gamma_s over spacings, gamma_v over velocities) and the input cost
    is gamma_u * I. This is the convention that reproduces the published
    formation values.
    """

    gamma_s: float
    gamma_v: float
    gamma_u: float

    def __post_init__(self):
        if min(self.gamma_s, self.gamma_v, self.gamma_u) <= 0:
            raise ConfigError("all performance weights must be positive")


@dataclass
class StateSpace:
    """Full 2n-state realization dx = A x + B u + H w of the mixed ring."""

    A: np.ndarray  # 2n x 2n
    B: np.ndarray  # 2n x k
    H: np.ndarray  # 2n x n
    n: int

    @property
    def k(self) -> int:
        return self.B.shape[1]


@dataclass
class ReducedRealization:
    """Minimal (2n-1)-state realization with the conserved spacing sum removed.

    T lifts the reduced state [s_1..s_{n-1}, v_1..v_n] back to the full
    state (with s_n = -sum of the others); E deletes the s_n coordinate.
    """

    A: np.ndarray  # m x m
    B: np.ndarray  # m x k
    H: np.ndarray  # m x n
    Q: np.ndarray  # m x m, symmetric positive definite
    R: np.ndarray  # k x k, diagonal positive definite
    T: np.ndarray  # 2n x m
    E: np.ndarray  # m x 2n

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def k(self) -> int:
        return self.B.shape[1]

    @property
    def n(self) -> int:
        return (self.m + 1) // 2


def ovm_velocity(s, v_max: float, s_st: float, s_go: float):
    """Spacing-dependent desired velocity: 0 below s_st, v_max above s_go,
    a half-cosine ramp in between. Vectorized over s."""
    s = np.asarray(s, dtype=float)
    ramp = 0.5 * v_max * (1.0 - np.cos(np.pi * (s - s_st) / (s_go - s_st)))
    v = np.where(s <= s_st, 0.0, np.where(s >= s_go, v_max, ramp))
    return float(v) if v.ndim == 0 else v


def ovm_velocity_slope(s, v_max: float, s_st: float, s_go: float):
    """Derivative of the desired-velocity ramp; zero outside (s_st, s_go)."""
    s = np.asarray(s, dtype=float)
    width = s_go - s_st
    slope = 0.5 * v_max * np.pi / width * np.sin(np.pi * (s - s_st) / width)
    d = np.where((s <= s_st) | (s >= s_go), 0.0, slope)
    return float(d) if d.ndim == 0 else d


def desired_velocity(s, p: HdvParams):
    return ovm_velocity(s, p.v_max, p.s_st, p.s_go)


def desired_velocity_slope(s, p: HdvParams):
    return ovm_velocity_slope(s, p.v_max, p.s_st, p.s_go)


def equilibrium(p: HdvParams, s_star: float) -> Equilibrium:
    """Equilibrium at the given spacing: v* = V(s*)."""
    return Equilibrium(s_star=float(s_star), v_star=desired_velocity(s_star, p))


def linearize(p: HdvParams, s_star: float) -> LinearHdvCoeffs:
    """Linearize the OVM about the equilibrium spacing s_star.

    Raises DegenerateEquilibriumError when s_star lies outside the ramp
    (s_st, s_go), where the spacing gain alpha1 = alpha * V'(s*) vanishes.
    """
    slope = desired_velocity_slope(s_star, p)
    if slope <= 0.0:
        raise DegenerateEquilibriumError(
            f"s* = {s_star} gives zero desired-velocity slope; "
            f"equilibrium must lie strictly inside ({p.s_st}, {p.s_go})"
        )
    return LinearHdvCoeffs(
        alpha1=p.alpha * slope,
        alpha2=p.alpha + p.beta,
        alpha3=p.beta,
    )


def string_stability_index(p: HdvParams, s_star: float) -> float:
    """String stability margin xi = alpha + 2*beta - V'(s*).

    Nonnegative xi means a chain of these drivers attenuates velocity
    perturbations travelling upstream; negative xi means amplification.
    """
    return p.alpha + 2.0 * p.beta - desired_velocity_slope(s_star, p)


def is_string_stable(p: HdvParams, s_star: float) -> bool:
    return string_stability_index(p, s_star) >= 0.0


def build_state_space(c: LinearHdvCoeffs, f: Formation) -> StateSpace:
    """Assemble the full mixed-traffic state-space matrices.

    The spacing block is the circulant difference operator; HDV velocity
    rows carry the linearized car-following coefficients; velocity rows of
    autonomous vehicles are zero (their acceleration is the control input).
    """
    n = f.n
    auto = np.zeros(n, dtype=bool)
    for i in f.members:
        auto[i - 1] = True

    m1 = np.zeros((n, n))
    spacing_gain = np.zeros((n, n))
    coupling = np.zeros((n, n))
    for i in range(n):
        prev = (i - 1) % n
        m1[i, i] = -1.0
        m1[i, prev] = 1.0
        if not auto[i]:
            spacing_gain[i, i] = c.alpha1
            coupling[i, i] = -c.alpha2
            coupling[i, prev] = c.alpha3

    a = np.block([[np.zeros((n, n)), m1], [spacing_gain, coupling]])
    b = np.zeros((2 * n, f.k))
    for r, i in enumerate(f.members):
        b[n + i - 1, r] = 1.0
    h = np.vstack([np.zeros((n, n)), np.eye(n)])
    return StateSpace(A=a, B=b, H=h, n=n)


def reduce_system(ss: StateSpace, w: PerformanceWeights) -> ReducedRealization:
    """Remove the conserved spacing-sum mode and attach the cost weights.

    The reduced state keeps s_1..s_{n-1} and all velocities; the deleted
    coordinate is recovered as s_n = -(s_1 + ... + s_{n-1}). The spacing-sum
    mode is unreachable from both control and disturbance, so the transfer
    function (and hence the H2 value) is unchanged by the reduction.
    """
    n = ss.n
    m = 2 * n - 1
    lift = np.zeros((2 * n, m))
    drop = np.zeros((m, 2 * n))
    for i in range(n - 1):
        lift[i, i] = 1.0
        lift[n - 1, i] = -1.0
        drop[i, i] = 1.0
    for i in range(n):
        lift[n + i, n - 1 + i] = 1.0
        drop[n - 1 + i, n + i] = 1.0

    a_r = drop @ ss.A @ lift
    q_full = np.diag([w.gamma_s] * n + [w.gamma_v] * n)
    return ReducedRealization(
        A=a_r,
        B=drop @ ss.B,
        H=drop @ ss.H,
        Q=lift.T @ q_full @ lift,
        R=w.gamma_u * np.eye(ss.k),
        T=lift,
        E=drop,
    )


def build_reduced(c: LinearHdvCoeffs, f: Formation, w: PerformanceWeights) -> ReducedRealization:
    """Convenience: state space + reduction in one call."""
    return reduce_system(build_state_space(c, f), w)


def nonlinear_accel(p: HdvParams, s, s_dot, v):
    """Nonlinear OVM acceleration F(s, s_dot, v). Vectorized."""
    return p.alpha * (desired_velocity(s, p) - v) + p.beta * s_dot


def check_linearization(p: HdvParams, s_star: float, step: float = 1e-5) -> dict:
    """Central finite differences of the nonlinear OVM at equilibrium.

    Returns the numerically estimated (alpha1, alpha2, alpha3); used as an
    independent oracle for linearize().
    """
    v_star = desired_velocity(s_star, p)

    def f(s, s_dot, v):
        return nonlinear_accel(p, s, s_dot, v)

    df_ds = (f(s_star + step, 0.0, v_star) - f(s_star - step, 0.0, v_star)) / (2 * step)
    df_dsdot = (f(s_star, step, v_star) - f(s_star, -step, v_star)) / (2 * step)
    df_dv = (f(s_star, 0.0, v_star + step) - f(s_star, 0.0, v_star - step)) / (2 * step)
    return {
        "alpha1": df_ds,
        "alpha2": df_dsdot - df_dv,
        "alpha3": df_dsdot,
    }
