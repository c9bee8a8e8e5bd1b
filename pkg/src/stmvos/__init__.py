"""Desk-scale space-time memory segmentation: trainable key/value memory
reads over past frames drive per-frame object mask prediction."""

from .errors import DataError, DimensionError, NumericError, StmError, ValidationError
from .tensor import GradTape, Tensor

__version__ = "0.1.0"

__all__ = [
    "DataError",
    "DimensionError",
    "GradTape",
    "NumericError",
    "StmError",
    "Tensor",
    "ValidationError",
    "__version__",
]
