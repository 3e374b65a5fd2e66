"""Exception hierarchy shared across the toolkit."""


class TandemPaintError(Exception):
    """Base class for all toolkit errors."""


class ParameterError(TandemPaintError, ValueError):
    """An argument violates an operation's precondition."""


class ShapeError(TandemPaintError, ValueError):
    """Image or tensor dimensions do not fit the requested network."""


class DecodeError(TandemPaintError):
    """Malformed image bytes. Carries the byte offset of the failure."""

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class UnsupportedFormatError(TandemPaintError):
    """Well-formed image in a flavor this codec does not handle."""


class DatasetError(TandemPaintError):
    """Problem assembling or reading a training dataset."""


class DatasetEmptyError(DatasetError):
    """Source directory yielded no usable examples."""


class CheckpointError(TandemPaintError):
    """Problem reading or writing a checkpoint file."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint format version is not the one this code writes."""


class CheckpointTruncatedError(CheckpointError):
    """Checkpoint file ends before the declared tensor data."""


class CheckpointDigestError(CheckpointError):
    """Probe forward pass does not reproduce the stored output digest."""


class ConfigMismatchError(CheckpointError):
    """Checkpoint was written under a different network configuration."""


class DivergenceError(TandemPaintError):
    """Training produced a non-finite loss or collapsed. Carries the step."""

    def __init__(self, message: str, step: int):
        self.step = step
        super().__init__(f"{message} (step {step})")
