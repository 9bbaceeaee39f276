"""Exception hierarchy shared by every module."""


class SpsError(Exception):
    """Base class for all errors raised by the package."""


class ConfigError(SpsError, ValueError):
    """Invalid user-supplied configuration or arguments."""


class CapacityError(SpsError):
    """Requested size exceeds what the dense oracle can hold."""


class NullStateError(SpsError, ArithmeticError):
    """The state norm is numerically zero, so nothing can be normalized."""


class NumericalDegeneracyError(SpsError, ArithmeticError):
    """A quantity that must be positive came out non-positive."""


class ConvergenceError(SpsError):
    """An iterative solver failed to converge."""


class DimensionError(SpsError, ValueError):
    """Array shapes or site counts do not agree."""
