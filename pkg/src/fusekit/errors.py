"""Exception types shared across the toolkit."""


class FusekitError(Exception):
    """Base class for all toolkit errors."""


class FormatError(FusekitError):
    """A checkpoint file does not conform to the FCK format."""


class IoError(FusekitError):
    """Reading or writing a file failed at the OS level."""


class AlignmentError(FusekitError):
    """Checkpoints (or a checkpoint and a model/batch) do not share
    identical tensor names, shapes, and dtypes."""


class EmptyFusionError(FusekitError):
    """fuse() was called with an empty model list."""


class WeightError(FusekitError):
    """Fusion weights are invalid (wrong length, negative, or all zero)."""


class NoCandidateError(FusekitError):
    """No source model remains after excluding the target task."""


class ConfigError(FusekitError):
    """A configuration value violates its documented constraints."""


class DataError(FusekitError):
    """A dataset, split, or label is malformed or empty."""
