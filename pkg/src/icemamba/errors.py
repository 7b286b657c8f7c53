"""Exception hierarchy shared across the package."""


class IceMambaError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(IceMambaError):
    """Tensor extents do not satisfy an operation's contract."""


class NumericError(IceMambaError):
    """Non-finite values or a numerically invalid argument."""


class DataError(IceMambaError):
    """Malformed files, missing months, or inconsistent series."""


class UsageError(IceMambaError):
    """Invalid configuration or command-line usage."""
