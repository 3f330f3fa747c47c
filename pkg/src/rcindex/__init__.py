"""Composite index of national research capacity.

Pipeline: panel ingestion and imputation, correlation and eigen analysis,
principal-axis factoring with varimax rotation, reliability coefficients,
factor-score and summative rankings, and a Gibbs-sampled hierarchical
regression of citation impact on the resulting indexes.
"""

__version__ = "0.1.0"

from .errors import (
    HeywoodError,
    NumericalError,
    RCIndexError,
    SingularMatrixError,
    ValidationError,
)

__all__ = [
    "__version__",
    "HeywoodError",
    "NumericalError",
    "RCIndexError",
    "SingularMatrixError",
    "ValidationError",
]
