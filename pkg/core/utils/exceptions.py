"""
Error types raised by the tuning lab.

Commands translate ConfigError into exit status 2; everything else surfaces
as a regular failure with the message attached.
"""


class LabError(Exception):
    """Base class for all lab errors."""


class ConfigError(LabError, ValueError):
    """Invalid experiment configuration (detected before any output is written)."""


class TraceFormatError(LabError, ValueError):
    """Malformed trace file."""

    def __init__(self, message: str, line_number: int = 0):
        self.line_number = line_number
        if line_number:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class SampleSizeError(LabError, ValueError):
    pass


class SpaceExhaustedError(LabError):
    pass


class NotPositiveDefiniteError(LabError):
    pass


class TensorTooLargeError(LabError, ValueError):
    pass


class VersionRegressionError(LabError):
    pass


class EmptyDataError(LabError, ValueError):
    """No data available for a model update or report."""
