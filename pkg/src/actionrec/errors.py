"""Exception types raised across the package."""


class ActionRecError(Exception):
    """Base class for all package errors."""


class FormatError(ActionRecError, ValueError):
    pass


class TruncatedFileError(ActionRecError, OSError):
    pass


class ShapeError(ActionRecError, ValueError):
    pass


class DomainError(ActionRecError, ValueError):
    pass


class InsufficientDataError(ActionRecError, ValueError):
    pass


class DegenerateDataError(ActionRecError, ValueError):
    pass


class CapacityError(ActionRecError, ValueError):
    pass


class ValidationError(ActionRecError, ValueError):
    pass


class ConfigurationError(ActionRecError):
    """A pipeline stage is missing an input it needs; the message names the stage."""
