"""Custom exceptions for maskmend."""


class MaskmendError(Exception):
    """Base exception for every error raised by maskmend."""

    def __init__(self, message: str):
        """Initialize the error.

        Args:
            message: Error message describing the problem
        """
        self.message = message
        super().__init__(self.message)


class ConfigError(MaskmendError):
    """Exception raised for configuration errors."""


class ParameterError(MaskmendError):
    """Exception raised when an operation receives an invalid parameter."""


class InvariantError(MaskmendError):
    """Exception raised when a domain type is constructed with invalid data."""


class InputFormatError(MaskmendError):
    """Base exception for malformed input files."""

    def __init__(self, message: str, path: str = ""):
        """Initialize input format error.

        Args:
            message: Error message describing the format issue
            path: Path of the offending file
        """
        self.path = path
        super().__init__(message)


class HeaderError(InputFormatError):
    """Malformed or unsupported file header."""


class MagicMismatchError(InputFormatError):
    """Binary container does not start with the expected magic bytes."""


class DimensionMismatchError(InputFormatError):
    """Stored dimensions are inconsistent with each other or with the payload."""


class TruncatedPayloadError(InputFormatError):
    """Payload is shorter than the header announces."""


class MaskWriteError(MaskmendError):
    """Exception raised when an artifact cannot be written."""


class ManifestError(MaskmendError):
    """Exception raised for malformed or incomplete manifests."""


class EmptyMaskError(MaskmendError):
    """Exception raised when a mask has no foreground component."""


class TrainingDivergenceError(MaskmendError):
    """Exception raised when the training loss becomes NaN or infinite."""

    def __init__(self, message: str, epoch: int = -1):
        """Initialize training divergence error.

        Args:
            message: Error message describing the divergence
            epoch: Epoch during which the loss diverged
        """
        self.epoch = epoch
        super().__init__(message)


class NotEnoughDataError(MaskmendError):
    """Exception raised when a trace is too short for epoch detection."""


class DegenerateEnsembleWarning(UserWarning):
    """Warning for ensembles whose members cannot differ."""
