"""Exception hierarchy shared by every module."""


class BlipError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(BlipError, ValueError):
    """Invalid parameter grid, sampling plan or experiment configuration.

    ``field`` carries the dotted path of the offending config entry when known.
    """

    def __init__(self, message, field=None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class DimensionError(BlipError, ValueError):
    """Array shapes are inconsistent with each other or with a plan."""


class DomainError(BlipError, ValueError):
    """An argument lies outside the domain of an operation."""


class SimulationError(BlipError, ArithmeticError):
    """The Bloch recursion produced a non-finite value."""

    def __init__(self, message, time_index=None):
        self.time_index = time_index
        super().__init__(message)


class DivergenceError(BlipError, ArithmeticError):
    """A reconstruction iterate became non-finite."""

    def __init__(self, message, iteration=None):
        self.iteration = iteration
        super().__init__(message)


class StagnationError(BlipError, ArithmeticError):
    """Adaptive step backtracking fell below the minimum step size."""


class IngestionError(BlipError, ValueError):
    """A file could not be parsed into the expected structure."""


class DegenerateSamplingError(BlipError, RuntimeError):
    """Every Monte-Carlo sample was rejected as degenerate."""
