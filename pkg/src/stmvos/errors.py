"""Exception hierarchy shared by all modules.

CLI exit codes: ValidationError (and subclasses) -> 1, DataError -> 2,
NumericError -> 3.
"""


class StmError(Exception):
    """Base class for all package errors."""


class ValidationError(StmError):
    """Invalid argument values or precondition violations."""


class DimensionError(ValidationError):
    """Tensor shapes are incompatible for the requested operation."""


class NumericError(StmError):
    """Non-finite values where finite ones are required."""


class DataError(StmError):
    """Dataset / file I/O failures, always naming the offending path."""
