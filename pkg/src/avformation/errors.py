"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration, parameters, or input files."""


class DegenerateEquilibriumError(ConfigError):
    """Equilibrium spacing lies on a flat part of the OVM ramp (zero slope)."""


class InfeasibleFormationError(ConfigError):
    """Formation cannot be evaluated (no autonomous vehicles)."""


class NumericsError(RuntimeError):
    """Base class for numerical failures in the solver stack."""


class SpectrumError(NumericsError):
    """Eigenvalue structure violates a solver precondition."""


class StabilizabilityError(NumericsError):
    """No stabilizing solution exists for the given system."""


class ConvergenceError(NumericsError):
    """Iterative refinement failed to reach the requested tolerance."""


class InstabilityError(NumericsError):
    """Closed loop is not Hurwitz, so the H2 norm is infinite."""


class QuadratureError(NumericsError):
    """Frequency-domain integration failed to converge."""


class ExtendHorizonError(NumericsError):
    """Impulse response has not decayed by the end of the horizon."""


class CollisionError(RuntimeError):
    """Simulated spacing reached zero."""

    def __init__(self, time: float, vehicle: int):
        super().__init__(f"vehicle {vehicle} spacing reached zero at t = {time:.3f} s")
        self.time = time
        self.vehicle = vehicle
