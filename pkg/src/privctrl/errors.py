"""Exception types shared across the package."""


class PrivctrlError(Exception):
    """Base class for all package-specific errors."""


class InvalidInputError(PrivctrlError):
    """An argument violates an operation precondition."""


class InvalidConfigError(PrivctrlError):
    """A configuration value violates a construction invariant."""


class ImpossibleObservationError(PrivctrlError):
    """Conditioning event has probability zero under the model."""


class UndefinedRatioError(PrivctrlError):
    """A log-ratio was requested for a zero-probability cell."""


class InstanceTooLargeError(PrivctrlError):
    """Exact enumeration would exceed the configured outcome cap."""


class DivergenceError(PrivctrlError):
    """Training produced a non-finite loss or gradient."""


class InternalInconsistencyError(PrivctrlError):
    """Two independent computations of the same quantity disagree."""
