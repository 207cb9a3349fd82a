"""Multi-dimensional bid adjustment for budget-constrained display campaigns.

Modules:

* ``core``: impression log, dimension specs, bid plans, aggregation.
* ``landscape``: CPM regression and the marginal volume model.
* ``optimizer``: closed-form disjoint solver and the overlapping solver.
* ``segmentation``: ranked equal-volume grouping of dimension values.
* ``evaluation``: crossover distance, WOE, IV and mutual information.
* ``simulator``: first-price auction simulator and A/B harness.
* ``controller``: the optimizing pipeline and the uniform baseline.
* ``io`` and ``cli``: JSON documents and the command-line front end.
"""

from .core import (
    BidPlan,
    CampaignConfig,
    DimensionSpec,
    GroupStats,
    ImpressionLog,
    ImpressionRecord,
    SegmentStats,
    accumulative_rpm_series,
    aggregate,
    derive_seed,
    ingest_log,
    write_log,
)
from .errors import (
    DataError,
    DimbidError,
    GroupingError,
    InfeasibleBudgetError,
    LandscapeError,
    LogFormatError,
    NotReadyError,
    SolverError,
)
from .landscape import CpmModel, LandscapeModel, MarginalVolumeModel, fit_cpm, fit_volume_marginal, predict_volume_marginal
from .optimizer import DisjointInstance, OverlappingInstance, solve_disjoint, solve_overlapping
from .segmentation import GroupingRequest, build_groups, rebuild_schedule

__version__ = "0.1.0"

__all__ = [
    "BidPlan",
    "CampaignConfig",
    "CpmModel",
    "DataError",
    "DimbidError",
    "DimensionSpec",
    "DisjointInstance",
    "GroupStats",
    "GroupingError",
    "GroupingRequest",
    "ImpressionLog",
    "ImpressionRecord",
    "InfeasibleBudgetError",
    "LandscapeError",
    "LandscapeModel",
    "LogFormatError",
    "MarginalVolumeModel",
    "NotReadyError",
    "OverlappingInstance",
    "SegmentStats",
    "SolverError",
    "accumulative_rpm_series",
    "aggregate",
    "build_groups",
    "derive_seed",
    "fit_cpm",
    "fit_volume_marginal",
    "ingest_log",
    "predict_volume_marginal",
    "rebuild_schedule",
    "solve_disjoint",
    "solve_overlapping",
    "write_log",
]
