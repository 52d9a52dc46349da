"""Offline TSP optimization with a pairwise-ranking surrogate and a Mahalanobis gate."""

from offline_tsp.errors import (
    ConfigurationError,
    DegenerateSampleError,
    InvalidArgumentError,
    InvalidRouteError,
    NumericalFailure,
    ValidationError,
)
from offline_tsp.tsp import ProblemInstance, sample_instance, tour_length

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "DegenerateSampleError",
    "InvalidArgumentError",
    "InvalidRouteError",
    "NumericalFailure",
    "ProblemInstance",
    "ValidationError",
    "__version__",
    "sample_instance",
    "tour_length",
]
