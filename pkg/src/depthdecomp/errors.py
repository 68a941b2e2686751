"""Exception hierarchy.

Errors are grouped into families; each family carries a distinct process
exit code used by the command-line entry point.
"""


class DepthDecompError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(DepthDecompError):
    """Invalid configuration, arguments, or overrides."""

    exit_code = 2


class InvalidSplitError(ConfigError):
    pass


class UnknownVariantError(ConfigError):
    pass


class UnknownFormatError(ConfigError):
    pass


class IOFailureError(DepthDecompError):
    """File-system level failures."""

    exit_code = 3


class UnreadableFileError(IOFailureError):
    pass


class BadHeaderError(IOFailureError):
    pass


class MissingPairError(IOFailureError):
    pass


class MissingCheckpointError(IOFailureError):
    pass


class DataError(DepthDecompError):
    """Invalid numerical data fed to an operation."""

    exit_code = 4


class NegativeDepthError(DataError):
    pass


class OutOfRangeError(DataError):
    pass


class DegenerateMapError(DataError):
    pass


class ShapeMismatchError(DataError):
    pass


class TooSmallError(DataError):
    pass


class DegenerateFitError(DataError):
    pass


class EmptyMaskError(DataError):
    pass


class SpaceMismatchError(DataError):
    pass


class NonPositiveDepthError(DataError):
    pass


class NonPositiveGroundTruthError(DataError):
    pass


class MissingTargetError(DataError):
    pass


class ScaleTooSmallError(DataError):
    pass


class TooFewPixelsError(DataError):
    pass


class EmptySceneError(DataError):
    pass


class ModelError(DepthDecompError):
    """Network construction or checkpoint problems."""

    exit_code = 5


class UnknownDecoderError(ModelError):
    pass


class PatchMismatchError(ModelError):
    pass


class ConfigMismatchError(ModelError):
    pass


class TrainingError(DepthDecompError):
    """Training schedule or dataset problems."""

    exit_code = 6


class EmptyDatasetError(TrainingError):
    pass


class MissingPhase1Error(TrainingError):
    pass
