"""Exception hierarchy shared by all aquaseg modules."""

from __future__ import annotations


class AquasegError(Exception):
    """Base class for every error raised by this package."""


class MalformedHeaderError(AquasegError):
    """Tensor container header is missing, truncated, or unsupported."""


class RankMismatchError(AquasegError):
    """Loaded tensor does not have the rank the caller asked for."""


class NonFiniteValueError(AquasegError):
    """Loaded tensor contains NaN or Inf."""


class SchemaError(AquasegError):
    """Manifest / registry / reasoning-record JSON violates its schema."""


class MissingFileError(AquasegError):
    """A file referenced by a manifest does not exist."""


class GroupOverlapError(AquasegError):
    """Two groups of the same category split share an index."""


class ShapeMismatchError(AquasegError):
    """Array shapes are incompatible for the requested operation."""


class LabelOutOfRangeError(AquasegError):
    """A label map contains an index outside [0, K) and not IGNORE."""


class ZeroVectorError(AquasegError):
    """An embedding row collapsed to (near-)zero norm and cannot be normalized."""


class EmptyMatrixError(AquasegError):
    """Metrics were requested from a confusion matrix with no observations."""


class ConfigError(AquasegError):
    """Run configuration is invalid or inconsistent."""
