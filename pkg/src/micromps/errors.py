"""Exception types shared across the package."""


class MicrompsError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(MicrompsError, ValueError):
    """A parameter is out of its documented range."""


class IncompatibleStatesError(MicrompsError, ValueError):
    """Two tensor networks cannot be contracted together (shape mismatch)."""


class TooLargeError(MicrompsError, ValueError):
    """A dense conversion or diagonalization exceeds the configured cap."""


class NumericalFailureError(MicrompsError, RuntimeError):
    """Non-finite tensor entries or a failed numerical check."""


class InsufficientDataError(MicrompsError, ValueError):
    """Not enough samples to compute the requested statistic."""


class DegenerateWindowError(MicrompsError, RuntimeError):
    """All filter weights underflowed; the energy window selects nothing."""


class SampleFailedError(MicrompsError, RuntimeError):
    """A single sample failed; carries the sample index for reporting."""

    def __init__(self, sample_index: int, reason: str):
        super().__init__(f"sample {sample_index} failed: {reason}")
        self.sample_index = sample_index
        self.reason = reason


class RunFailedError(MicrompsError, RuntimeError):
    """No sample of an ensemble run produced a usable result."""


class ConfigError(MicrompsError, ValueError):
    """A run configuration file failed validation; names the offending field."""

    def __init__(self, field: str, message: str):
        super().__init__(f"config field '{field}': {message}")
        self.field = field
