class DualNetError(Exception):
    """Base class for errors raised by this package."""


class ShapeError(DualNetError, ValueError):
    pass


class NonFiniteError(DualNetError, FloatingPointError):
    pass


class ConfigError(DualNetError, ValueError):
    pass


class DataError(DualNetError, ValueError):
    pass


class CheckpointError(DualNetError, ValueError):
    pass


class UnsupportedVersionError(CheckpointError):
    pass
