"""Exception types shared across the package.

The CLI maps these onto its exit-code taxonomy: usage errors exit 1,
data errors exit 2, numeric errors (including shape mismatches and
divergence) exit 3.
"""


class LrruError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class UsageError(LrruError):
    """Bad command-line usage: unknown flags, malformed arguments."""

    exit_code = 1


class DataError(LrruError):
    """Missing or malformed input data: files, configs, empty depth maps."""

    exit_code = 2


class NumericError(LrruError):
    """Numeric failure: divergence, non-finite values."""

    exit_code = 3


class ShapeError(NumericError):
    """Structured dimension error raised by tensor operations."""

    def __init__(self, op, message):
        super().__init__(f"{op}: {message}")
        self.op = op
