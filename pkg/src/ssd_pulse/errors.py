"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Array shapes are inconsistent with an operation's contract."""


class ArgumentError(ValueError):
    """An argument is outside the operation's domain."""


class CorrelationError(ArgumentError):
    """Pearson correlation is undefined (zero variance input)."""


class TensorFormatError(ValueError):
    """A PTNSR blob is malformed or truncated."""


class CheckpointError(Exception):
    """Base class for checkpoint load failures."""


class CheckpointFormatError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    pass
