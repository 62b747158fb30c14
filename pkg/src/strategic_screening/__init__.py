"""Best responses of strategic agents to screening pipelines of linear
classifiers, in sequential and simultaneous deployment, together with the
conservative threshold-shift defense."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    AgentEvaluationError,
    DimensionMismatch,
    GridSpecError,
    InfeasibleRegion,
    NotNormalized,
    ParallelClassifiers,
    PlanInfeasible,
    ScenarioError,
    ScreeningError,
    SolverDidNotConverge,
)
from .geometry import (  # noqa: E402
    CostKind,
    CostModel,
    HalfspaceClassifier,
    Mode,
    Pipeline,
    angle_between,
    boundary_intersection,
    classify,
    conjunction_feasible,
    cost_gap_pair,
    general_position,
    homogenize,
    is_monotone,
    project_and_distance,
    wedge_pair,
)
from .response import (  # noqa: E402
    CostGap,
    KktCertificate,
    ManipulationPlan,
    Method,
    RegionLabel,
    best_response,
    classify_region,
    conjunction_closed_form_2d,
    conjunction_response,
    cost_gap,
    kkt_check,
    sequential_closed_form_2d,
    sequential_response,
)
from .oracle import GridSpec, OracleResult, oracle_conjunction, oracle_sequential  # noqa: E402
from .defense import (  # noqa: E402
    AuditResult,
    DefendedPipeline,
    EvaluationReport,
    ScreeningOutcome,
    conservative_defense,
    evaluate,
    optimality_spot_check,
    zero_fp_audit,
)
from .population import PopulationSpec, RegionRaster, rasterize, sample_population  # noqa: E402
from .scenario import Results, Scenario, load_scenario, read_results, write_results  # noqa: E402
