"""Mean dynamics of population games on finite grids of a continuous strategy space."""

__version__ = "0.1.0"

from .analysis import (  # noqa: E402
    EquilibriumReport,
    InitSpec,
    MobilityReport,
    ConvergenceReport,
    Verdict,
    certify_equilibrium,
    convergence_study,
    equilibrium_run,
    nash_gap,
    paralysis_study,
    velocity_bound_check,
)
from .dynamics import (  # noqa: E402
    ContractViolation,
    IntegratorConfig,
    NumericalAbort,
    RK4Fixed,
    RK45Adaptive,
    Trajectory,
    VectorField,
    integrate,
    rhs,
)
from .estimators import MeanDynamics  # noqa: E402
from .games import (  # noqa: E402
    AnticoordinationBump,
    AnticoordinationDiscrete,
    ConstantZero,
    TabulatedGrid,
    assumption1_probe,
    payoff_vector,
)
from .measures import (  # noqa: E402
    DiscreteMeasure,
    GridPlacement,
    PiecewiseDensity,
    UniformDensity,
    make_grid_measure,
    restrict_density,
    sample_measure,
)
from .metric import bl_distance, l1_state_distance  # noqa: E402
from .protocols import BNN, REPLICATOR, SMITH, ReferenceMode, RevisionProtocol, switch_rate  # noqa: E402

__all__ = [
    "__version__",
    "EquilibriumReport",
    "InitSpec",
    "MobilityReport",
    "ConvergenceReport",
    "Verdict",
    "certify_equilibrium",
    "convergence_study",
    "equilibrium_run",
    "nash_gap",
    "paralysis_study",
    "velocity_bound_check",
    "ContractViolation",
    "IntegratorConfig",
    "NumericalAbort",
    "RK4Fixed",
    "RK45Adaptive",
    "Trajectory",
    "VectorField",
    "integrate",
    "rhs",
    "AnticoordinationBump",
    "AnticoordinationDiscrete",
    "ConstantZero",
    "TabulatedGrid",
    "assumption1_probe",
    "payoff_vector",
    "DiscreteMeasure",
    "GridPlacement",
    "PiecewiseDensity",
    "UniformDensity",
    "make_grid_measure",
    "restrict_density",
    "sample_measure",
    "MeanDynamics",
    "bl_distance",
    "l1_state_distance",
    "BNN",
    "REPLICATOR",
    "SMITH",
    "ReferenceMode",
    "RevisionProtocol",
    "switch_rate",
]
