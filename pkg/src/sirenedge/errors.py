"""Exception hierarchy shared across the package."""


class SirenEdgeError(Exception):
    """Base class for all package errors."""


class ParseError(SirenEdgeError):
    """Malformed container or record that cannot be decoded."""


class UnsupportedFormat(SirenEdgeError):
    """Recognized container, unsupported codec/encoding."""


class IoError(SirenEdgeError):
    """Filesystem or network resource could not be used."""


class ChunkTooLarge(SirenEdgeError):
    """Write larger than the ring buffer capacity."""


class WindowTooLarge(SirenEdgeError):
    """Read window larger than the ring buffer capacity."""


class NoValidSize(SirenEdgeError):
    """No input size in the probed range was accepted by the backend."""


class EmptyInput(SirenEdgeError):
    """Operation requires a non-empty signal."""


class InputTooShort(SirenEdgeError):
    """Frame shorter than the backend's minimum input size."""


class BackendError(SirenEdgeError):
    """Classifier backend failed or became unreachable."""


class BackendTimeout(BackendError):
    """Classifier backend did not answer within the deadline."""


class ProtocolError(BackendError):
    """Classifier backend answered with bytes that violate the wire protocol."""


class OrderViolation(SirenEdgeError):
    """Time-ordered input arrived out of order."""


class GridMismatch(SirenEdgeError):
    """Frame grids differ in length or resolution."""


class UndefinedRate(SirenEdgeError):
    """Event rates are undefined (no reference events but spurious predictions)."""


class ShapeError(SirenEdgeError):
    """Tensor arguments have incompatible shapes."""


class ConfigError(SirenEdgeError):
    """Configuration values violate their documented constraints."""


class DegenerateFilter(SirenEdgeError):
    """Filter weights sum to zero; centroid undefined."""


class DegenerateInput(SirenEdgeError):
    """Signal inputs that make the requested operation meaningless."""


class EmptyMaps(SirenEdgeError):
    """Class-activation mapping needs at least one activation map."""
