"""Clustering of time series by weighted spectral and bispectral means."""

__version__ = "0.1.0"

from .series import TimeSeries, difference, dft, dominant_period, scale_to_initial  # noqa: E402
from .polyspectra import (  # noqa: E402
    DEFAULT_WEIGHTS,
    WeightFunction,
    polyspectral_mean,
    polyspectral_means,
)
from .clustering import FeatureMatrix, build_feature_matrix, cluster, standardize  # noqa: E402

__all__ = [
    "__version__",
    "TimeSeries",
    "difference",
    "dft",
    "dominant_period",
    "scale_to_initial",
    "DEFAULT_WEIGHTS",
    "WeightFunction",
    "polyspectral_mean",
    "polyspectral_means",
    "FeatureMatrix",
    "build_feature_matrix",
    "cluster",
    "standardize",
]
