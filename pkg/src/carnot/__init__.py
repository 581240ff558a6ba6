"""Numerical sub-Riemannian geometry on step-two Carnot groups and the Engel and Martinet models.

The distance solver lives in :mod:`carnot.distance` (``from carnot.distance import distance``);
it is not re-exported here so that the submodule name stays importable.
"""

from .controls import Control, d_endpoint, endpoint, endpoint_rank, is_singular_control
from .distance import (
    DistanceResult,
    SolverOptions,
    cusp_lower_bound,
    oracle_bruteforce,
    solve_direct,
    solve_shooting,
    subgroup_distance_free,
)
from .errors import (
    CarnotError,
    ConfigError,
    DuplicateFrequencyError,
    HormanderError,
    NoRootFoundError,
    NotConvergedError,
    NotSkewError,
    OrthogonalityError,
    PointNotInSubgroupError,
)
from .extremals import NormalExtremal, abnormal_membership_free, abnormality_test, extremal_endpoint, image_via_W, make_extremal
from .groups import (
    EngelSystem,
    MartinetSystem,
    MetivierReport,
    StepTwoGroup,
    check_metivier,
    engel,
    free,
    h_alpha,
    h_times_r,
    heisenberg,
    load_group,
    martinet,
    preset,
)
from .linalg_skew import Bivector, skew_exp_apply, skew_spectral, wedge

__all__ = [
    "abnormal_membership_free",
    "abnormality_test",
    "Bivector",
    "CarnotError",
    "check_metivier",
    "ConfigError",
    "Control",
    "cusp_lower_bound",
    "d_endpoint",
    "DistanceResult",
    "DuplicateFrequencyError",
    "endpoint",
    "endpoint_rank",
    "engel",
    "EngelSystem",
    "extremal_endpoint",
    "free",
    "h_alpha",
    "h_times_r",
    "heisenberg",
    "HormanderError",
    "image_via_W",
    "is_singular_control",
    "load_group",
    "make_extremal",
    "martinet",
    "MartinetSystem",
    "MetivierReport",
    "NormalExtremal",
    "NoRootFoundError",
    "NotConvergedError",
    "NotSkewError",
    "oracle_bruteforce",
    "OrthogonalityError",
    "PointNotInSubgroupError",
    "preset",
    "skew_exp_apply",
    "skew_spectral",
    "solve_direct",
    "solve_shooting",
    "SolverOptions",
    "StepTwoGroup",
    "subgroup_distance_free",
    "wedge",
]

__version__ = "0.1.0"
