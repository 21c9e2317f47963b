"""Exception types shared across the package."""


class PinnCurvError(Exception):
    """Base class for all errors raised by pinncurv."""


class ConfigurationError(PinnCurvError, ValueError):
    """Inconsistent shapes, invalid hyperparameters or malformed config files."""


class DivergenceError(PinnCurvError, FloatingPointError):
    """A loss or gradient became non-finite (or exceeded the divergence guard)."""

    def __init__(self, message, value=None, step=None):
        super().__init__(message)
        self.value = value
        self.step = step


class DomainError(PinnCurvError, ValueError):
    """An argument lies outside the domain of the operation (e.g. V <= 0 in BBI)."""


class DegenerateStartError(PinnCurvError, ValueError):
    """BBI cannot pick an initial momentum direction because the gradient vanishes."""


class InsufficientDataError(PinnCurvError, ValueError):
    """Too few valid samples for a statistic."""
