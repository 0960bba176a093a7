"""Optimal formation of autonomous vehicles in ring-road mixed traffic.

Given k autonomous vehicles among n - k human drivers on a ring road, the
package synthesizes the globally H2-optimal state feedback for every
candidate placement, searches over placements (quotiented by rotation),
and validates the predictions with a nonlinear time-domain simulator.
"""

from .errors import (
    CollisionError,
    ConfigError,
    ConvergenceError,
    DegenerateEquilibriumError,
    ExtendHorizonError,
    InfeasibleFormationError,
    InstabilityError,
    NumericsError,
    QuadratureError,
    SpectrumError,
    StabilizabilityError,
)
from .h2 import (
    DEFAULT_OPTIONS,
    H2Synthesis,
    SolverOptions,
    closed_loop_h2,
    h2_quadrature,
    solve_care,
    solve_lyapunov,
    spectral_abscissa,
    synthesize,
)
from .search import (
    FormationClass,
    GreedyResult,
    SearchResult,
    SubmodularityReport,
    brute_force,
    canonicalize,
    classify,
    enumerate_formations,
    evaluate,
    greedy,
    necklace_count,
    reproduce_counterexample,
    rotate,
    submodularity_check,
)
from .sim import (
    DisturbanceSpec,
    FormationComparison,
    SimConfig,
    Trajectory,
    compare_formations,
    impulse_energy,
    simulate,
    synthesized_config,
)
from .traffic import (
    Equilibrium,
    Formation,
    HdvParams,
    LinearHdvCoeffs,
    PerformanceWeights,
    ReducedRealization,
    StateSpace,
    build_reduced,
    build_state_space,
    desired_velocity,
    desired_velocity_slope,
    equilibrium,
    is_string_stable,
    linearize,
    reduce_system,
    string_stability_index,
)

__version__ = "0.1.0"
