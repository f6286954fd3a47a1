"""Simulator-guided importance sampling for tuning ranking parameters."""

from .domain import (
    KPI_NAMES,
    CandidateAd,
    ConstructionError,
    CostLedger,
    KpiDelta,
    KpiVector,
    ParameterSpace,
    RandomizationPolicy,
    Session,
    Setting,
    SgisConfig,
    kpi_delta,
    make_setting,
)
from .simulator import (
    ArtificialDataset,
    BumpSurfaceModel,
    CounterfactualSession,
    SessionLog,
    UserResponseModel,
    collect_artificial,
    evaluate_setting,
    generate_sessions,
    replay,
    session_kpis,
    simulate,
)
from .estimator import (
    DenseGridSpec,
    IsEstimate,
    dense_grid,
    gaussian_logdensity,
    importance_weight,
    is_art,
    is_estimate,
)
from .search import (
    EmptyPoolError,
    ObjectiveSpec,
    ScoredCandidate,
    SgisResult,
    coarse_grid,
    correlation_report,
    enumerate_baseline,
    iterative_is_baseline,
    score,
    sgis,
    top_k,
)

__version__ = "0.1.0"
