"""
Errors raised by the loss lab.

Each error also derives from the closest built-in so callers that only know
about ``ValueError`` and friends keep working.
"""


class LabError(Exception):
    """Base class for loss lab errors."""


class ShapeError(LabError, ValueError):
    """Array shapes do not line up."""


class InputError(LabError, ValueError):
    """An argument is outside its documented domain."""


class EvaluationError(LabError, ArithmeticError):
    """A function produced a non-finite value."""

    def __init__(self, message, coordinate=None):
        super().__init__(message)
        self.coordinate = coordinate


class UsageError(LabError, RuntimeError):
    """An API was called out of order, e.g. with a stale forward cache."""


class DatasetParseError(LabError, ValueError):
    """A dataset file could not be parsed."""

    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f'line {line_number}: {message}'
        super().__init__(message)
        self.line_number = line_number


class DatasetValidationError(DatasetParseError):
    """A dataset row parsed but holds out-of-range values."""


class ConfigError(LabError, ValueError):
    """An experiment configuration is inconsistent."""
