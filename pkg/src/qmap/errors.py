"""Exception hierarchy shared by every qmap module."""


class QmapError(Exception):
    """Base class for all errors raised by qmap."""


class ShapeError(QmapError, ValueError):
    """Array dimensions disagree with what an operation requires."""


class SizeError(QmapError, ValueError):
    """An input is too small (or empty) for the requested operation."""


class DomainError(QmapError, ValueError):
    """A value lies outside its admissible range."""


class DecodeError(QmapError, OSError):
    """An image file could not be read or decoded."""


class FormatError(QmapError, ValueError):
    """A file decoded but has an unsupported layout (e.g. channel count)."""


class NumericError(QmapError, FloatingPointError):
    """A non-finite value appeared during training."""


class StateError(QmapError, RuntimeError):
    """An object was used in an inconsistent state (e.g. tape/graph mismatch)."""


class ChannelError(QmapError, ValueError):
    """An operation needs colour input but received grayscale (or vice versa)."""


class LoadError(QmapError, ValueError):
    """A manifest or config file failed validation."""


class SplitError(QmapError, ValueError):
    """A dataset cannot be partitioned as requested."""


class LabelError(QmapError, ValueError):
    """Map labels cannot be produced for a manifest entry."""


class UndefinedCorrelationError(QmapError, ValueError):
    """A correlation coefficient is undefined (constant input, too few samples)."""


class FitError(QmapError, RuntimeError):
    """The logistic mapping failed to converge."""


class FingerprintError(QmapError, RuntimeError):
    """Checkpoints and data artifacts do not belong together."""


class CheckpointError(QmapError, ValueError):
    """A checkpoint file is malformed or has an unknown version."""
