"""Exception hierarchy shared by all siesef modules."""


class SiesefError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(SiesefError, ValueError):
    """Tensor/array shapes are inconsistent with an operation's contract."""


class NumericError(SiesefError, ArithmeticError):
    """A computation produced (or received) non-finite values."""


class StateError(SiesefError, RuntimeError):
    """An operation was called in an invalid order (e.g. backward before forward)."""


class FormatError(SiesefError, ValueError):
    """A binary or text file does not match its declared format."""


class ConfigError(SiesefError, ValueError):
    """A run configuration is invalid or incomplete."""
