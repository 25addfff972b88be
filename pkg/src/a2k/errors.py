"""Exception types shared across the package."""


class A2KError(ValueError):
    """Base class for all library errors."""


class DimensionError(A2KError):
    """Operand shapes are inconsistent with the requested operation."""


class ValidationError(A2KError):
    """An argument violates a documented precondition (divisibility, range, layer count)."""


class ConfigError(A2KError):
    """An attention configuration is unusable, e.g. every branch is disabled."""


class FormatError(A2KError):
    """A serialized tensor or manifest is malformed."""
