"""Exception types shared across the package."""


class SimulationError(ValueError):
    """Base class for errors raised by finitecollapse."""


class InvalidSystemError(SimulationError):
    """Spectrum or amplitude input cannot form a valid system."""


class InvalidStateError(SimulationError):
    """State-vector input is unusable (e.g. zero norm)."""


class ConfigurationError(SimulationError):
    """Bad run parameters: grids, routes, config documents."""


class DomainError(SimulationError):
    """Argument outside the mathematical domain of an operation."""


class UnsupportedInputError(SimulationError):
    """Input lacks data required by the requested operation."""
