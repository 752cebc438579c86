"""Semiparametric estimation for paired comparisons with covariates."""

from ._kernels import BACKEND
from .bt import BtFitResult, SeparationError, fit_bt_mle
from .core import (
    ColumnSchema,
    ComparisonRecord,
    DataError,
    Dataset,
    IdentifiabilityError,
    ParameterSet,
    canonicalize,
    validate,
)
from .density import (
    DensityModel,
    conditional_density,
    delta_hat,
    quartic_kernel,
    select_bandwidth,
)
from .design import DesignOperator
from .estimator import (
    CollinearityError,
    EstimateReport,
    build_pseudo_outcomes,
    fit,
    rank_items,
    sandwich_variance,
    trend_sign_check,
)
from .io import emit_dataset, ingest, load_season

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BtFitResult",
    "CollinearityError",
    "ColumnSchema",
    "ComparisonRecord",
    "DataError",
    "Dataset",
    "DensityModel",
    "DesignOperator",
    "EstimateReport",
    "IdentifiabilityError",
    "ParameterSet",
    "SeparationError",
    "build_pseudo_outcomes",
    "canonicalize",
    "conditional_density",
    "delta_hat",
    "emit_dataset",
    "fit",
    "fit_bt_mle",
    "ingest",
    "load_season",
    "quartic_kernel",
    "rank_items",
    "sandwich_variance",
    "select_bandwidth",
    "trend_sign_check",
    "validate",
]
