"""Exception taxonomy shared across the package.

The CLI maps UsageError to exit code 1 and every other EffmapError to
exit code 2.
"""


class EffmapError(Exception):
    """Base class for all package errors."""


class GeometryError(EffmapError):
    """Singular affines, non-invertible transforms."""


class OutOfGridError(GeometryError):
    """A query point lies too far outside the voxel grid."""


class ShapeError(EffmapError):
    """Array or volume dimensions do not match."""


class ConfigError(EffmapError):
    """Invalid configuration values."""


class DataError(EffmapError):
    """Semantically invalid data (bad improvement range, bad labels)."""


class DomainError(EffmapError):
    """Argument outside an operation's mathematical domain."""


class DegenerateInputError(DataError):
    """Statistics requested on inputs that cannot support them."""


class PairingError(DataError):
    """Paired inputs disagree in length or keys."""


class MissingTransformError(DataError):
    """A patient record has no registered spatial transform."""


class FormatError(EffmapError):
    """Malformed serialized artifact."""


class BadMagicError(FormatError):
    """File does not start with the expected magic bytes."""


class SizeMismatchError(FormatError):
    """Header-declared payload size disagrees with the file."""


class UnknownDtypeError(FormatError):
    """Header declares a dtype this package does not support."""


class MissingFileError(DataError):
    """An expected artifact file is absent."""


class UsageError(EffmapError):
    """Bad command line invocation."""
