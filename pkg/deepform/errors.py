"""
Exception hierarchy for deepform.

Each class carries the process exit code the command line maps it to.
"""


class DeepFormError(Exception):
    """Base class for every error raised deliberately by deepform."""
    exit_code = 1


class UsageError(DeepFormError):
    """Invalid command line values or out-of-range requests."""
    exit_code = 2


class ConfigError(UsageError):
    """Invalid or unknown configuration keys and values."""


class DataError(DeepFormError, ValueError):
    """Unreadable, malformed or inconsistent input data."""
    exit_code = 3


class ShapeMismatchError(DataError):
    """Two artifacts disagree on dimensions."""

    def __init__(self, message: str, expected: tuple | None = None, actual: tuple | None = None):
        if expected is not None or actual is not None:
            message = f"{message} (expected {expected}, got {actual})"
        super().__init__(message)
        self.expected = expected
        self.actual = actual


class NumericError(DeepFormError, ArithmeticError):
    """Numerical failure that recovery could not fix."""
    exit_code = 4


def exit_code_for(error: BaseException) -> int:
    """Map an exception to the command line exit code."""
    if isinstance(error, DeepFormError):
        return error.exit_code
    return 1
