"""Exception types shared across the package."""


class AsetError(Exception):
    """Base class for all package errors."""


class ZeroVarianceError(AsetError, ValueError):
    """Raised when a candidate feature is constant over the labeled pixels."""


class DuplicateDescriptorError(AsetError, ValueError):
    pass


class UnknownBandError(AsetError, KeyError):
    pass


class InfeasibleConfigError(AsetError, ValueError):
    """Raised when a sampler or run configuration cannot be satisfied."""


class MissingClassError(AsetError, ValueError):
    pass


class DimensionError(AsetError, ValueError):
    pass


class NotConvergedError(AsetError, RuntimeError):
    pass


class FileFormatError(AsetError, ValueError):
    """Raised for unreadable or corrupt model, trace, cube or label files."""
