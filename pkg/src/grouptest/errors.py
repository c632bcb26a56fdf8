"""Exception types shared across the package."""


class GroupTestingError(Exception):
    """Base class for errors raised by grouptest."""


class InvalidParameterError(GroupTestingError, ValueError):
    """A parameter is out of range or inconsistent with another one."""


class ModelViolationError(GroupTestingError):
    """Test outcomes contradict the noiseless OR channel."""


class ResourceLimitError(GroupTestingError):
    """An exact oracle was asked to enumerate more than its cap."""
