"""Exception hierarchy shared by every stage of the pipeline."""

from __future__ import annotations


class DofError(Exception):
    """Base class for all errors raised by dogfocus."""


# image_io
class ImageFileNotFound(DofError, FileNotFoundError):
    pass


class UnsupportedFormat(DofError, ValueError):
    pass


class CorruptImage(DofError, ValueError):
    pass


class InvalidImage(DofError, ValueError):
    pass


class InvalidFactor(DofError, ValueError):
    pass


class ImageTooLarge(DofError, ValueError):
    pass


# preprocess
class InvalidStretchParams(DofError, ValueError):
    pass


class DegenerateImage(DofError, ValueError):
    """Informational: defined for callers that want to reject constant images.

    ``histogram_stretch`` itself never raises it; constant images map to zeros.
    """


# scale_space
class InvalidScaleGrid(DofError, ValueError):
    pass


class NonPositiveScale(DofError, ValueError):
    pass


class ShapeMismatch(DofError, ValueError):
    pass


class InsufficientLevels(DofError, ValueError):
    pass


# detect
class EmptyStack(DofError, ValueError):
    pass


class InvalidNeighborhood(DofError, ValueError):
    pass


# parallel
class TooManyWorkers(DofError, ValueError):
    pass


class WorkerFailure(DofError, RuntimeError):
    """A pyramid worker raised; carries the 1-based scale indices it owned."""

    def __init__(self, scale_indices, cause: BaseException):
        self.scale_indices = tuple(scale_indices)
        self.cause = cause
        super().__init__(
            f"worker for scale indices {list(self.scale_indices)} failed: {cause!r}"
        )


# calibrate
class InsufficientData(DofError, ValueError):
    pass


class AllCountsZero(DofError, ValueError):
    pass


class NonDecreasingFit(DofError, ValueError):
    pass


class CalibrationMismatch(DofError, ValueError):
    """Threshold file was produced under different detection parameters."""


# bench / synthetic
class InvalidRange(DofError, ValueError):
    pass
