"""Exception types shared across the package."""


class UQBenchError(Exception):
    """Base class for all uqbench errors."""


class ShapeMismatchError(UQBenchError):
    """Operands have incompatible shapes."""


class NoForwardPassError(UQBenchError):
    """backward() called before a forward pass recorded activations."""


class NonFiniteGradientError(UQBenchError):
    """A gradient contains NaN or Inf."""


class EmptyDatasetError(UQBenchError):
    """Training requested on an empty dataset."""


class CorruptCheckpointError(UQBenchError):
    """Checkpoint file is malformed, truncated, or has the wrong magic/version."""


class GazeOutOfRangeError(UQBenchError):
    """Requested gaze angle is outside the renderable range."""


class IoFailureError(UQBenchError):
    """A dataset file could not be written or read."""


class BadImageFileError(UQBenchError):
    """Image file has a malformed header or truncated payload."""


class WrongCorruptionFamilyError(UQBenchError):
    """An off-crop kind was passed to the patch-level corruption entry point."""


class DegenerateInputError(UQBenchError):
    """Correlation/slope input too short or with zero variance."""


class DegenerateSlopesError(UQBenchError):
    """All severity-response slopes are ~0: the model is uniformly insensitive."""


class InsufficientCleanImagesError(UQBenchError):
    """Low-uncertainty pool is smaller than the requested sweep size."""


class InsufficientDataError(UQBenchError):
    """Dataset has fewer samples than the requested number of quantiles."""


class EmptyChartError(UQBenchError):
    """Chart emission requested with no series or too few points."""
