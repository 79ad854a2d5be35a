"""Exception types shared across the package."""


class AbftGuardError(Exception):
    """Base class for all errors raised by this package."""


class InvalidLayerError(AbftGuardError):
    """A layer's geometry is impossible (e.g. non-positive conv output)."""


class ShapeMismatchError(AbftGuardError):
    """Matrix or vector operands do not conform."""


class ExactOverflowError(AbftGuardError):
    """An exact-integer accumulation could exceed the int64 range."""


class EmptyInputError(AbftGuardError):
    """An aggregation was asked for over an empty sequence."""


class DocumentError(AbftGuardError):
    """A JSON document failed schema validation.

    The message names the offending field path so callers can report it.
    """
