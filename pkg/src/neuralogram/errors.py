"""Exception hierarchy for the neuralogram package.

Every error raised on purpose by this package derives from
``NeuralogramError`` so callers (and the CLI) can distinguish data/model
errors from programming errors.
"""


class NeuralogramError(Exception):
    """Base class for all errors raised by this package."""


class AliasingError(NeuralogramError):
    """A requested frequency is at or above the Nyquist limit."""


class ShapeError(NeuralogramError):
    """Operands have incompatible or invalid shapes."""


class SingularTransformError(NeuralogramError):
    """Normal equations are singular; ridge > 0 would regularize them."""


class FilterbankError(NeuralogramError):
    """A filterbank cannot be built at the requested resolution."""


class CheckpointFormatError(NeuralogramError):
    """A checkpoint (or matrix) file is not in the expected format."""


class CheckpointVersionError(CheckpointFormatError):
    """A checkpoint file declares an unsupported format version."""


class CheckpointIntegrityError(CheckpointFormatError):
    """A checkpoint file is truncated or internally inconsistent."""


class TrainingDivergedError(NeuralogramError):
    """Training loss became non-finite."""
