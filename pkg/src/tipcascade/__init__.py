"""Coupled bistable tipping elements: simulation, bifurcation geometry, regimes."""

from .core_model import (
    Branch,
    CascadeConfig,
    ConfigError,
    Coupling,
    CubicElement,
    LinearCoupling,
    LocalisedCoupling,
    ParameterShift,
    SolverSettings,
    branch_state,
    coupling_preimages,
    coupling_value,
    drift,
    equilibria,
)
from .integrator import (
    EventKind,
    EventRecord,
    HorizonExceeded,
    IntegrationError,
    StiffnessError,
    Trajectory,
    find_crossings,
    integrate_cascade,
    locate_events,
)
from .bifurcation import (
    CuspPoint,
    DwubPrediction,
    FoldCurvePoint,
    FrozenEquilibrium,
    FrozenTippingTrajectory,
    Subsystem,
    cusp_points,
    fold_curves,
    frozen_equilibria,
    frozen_tipping_trajectory,
    predict_dwub,
)
from .classify import (
    DownstreamOutcome,
    Scenario,
    ScenarioResult,
    TippingTimings,
    UpstreamOutcome,
    classification_report,
    classify_scenario,
    detect_intermediate_state,
    downstream_outcome,
    extract_timings,
    upstream_outcome,
)
from .regimes import (
    BoundaryCurve,
    BoundaryKind,
    BoundaryPoint,
    BracketError,
    CellResult,
    RegimeMap,
    bisect_boundary,
    evaluate_cell,
    log_grid,
    sweep_regimes,
    trace_boundary,
)

__version__ = "0.1.0"
