class TactileGCNError(Exception):
    """Base class for every error raised by the library."""


class ShapeError(TactileGCNError, ValueError):
    """Raised when tensor or array dimensions do not agree."""


class ConfigurationError(TactileGCNError, ValueError):
    """Raised for invalid hyperparameters or layer settings."""


class EmptyInputError(TactileGCNError, ValueError):
    """Raised when an operation receives no rows, frames or neighbours."""


class LabelError(TactileGCNError, ValueError):
    """Raised when a class label lies outside ``[0, num_classes)``."""


class NumericalError(TactileGCNError, ArithmeticError):
    """Raised when a tensor holds NaN or infinite values."""


class GradientError(NumericalError):
    """Raised when a backward rule produces a non-finite gradient."""

    def __init__(self, op_name: str, message: str = ""):
        self.op_name = op_name
        super().__init__(message or f"non-finite gradient produced by op '{op_name}'")


class DatasetError(TactileGCNError):
    """Base class for dataset ingestion errors."""


class FormatError(DatasetError):
    """Raised on bad magic bytes or unsupported format versions."""


class CountMismatchError(DatasetError):
    """Raised when a payload holds a different number of records than declared."""


class NonFiniteDataError(DatasetError):
    """Raised when a payload contains NaN or infinite values."""


class MissingClustersError(DatasetError):
    """Raised when a split has not been clustered yet."""


class CheckpointError(TactileGCNError):
    """Raised when a checkpoint cannot be read or does not match the model."""


class PressureRangeError(TactileGCNError, ValueError):
    """Raised when normalised pressures lie outside ``[0, 1]``."""
