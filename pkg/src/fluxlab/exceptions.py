"""Exception types shared across the package."""


class FluxLabError(Exception):
    """Base class for all fluxlab errors."""


class ShapeError(FluxLabError):
    """Operands have incompatible shapes."""


class DomainError(FluxLabError):
    """Input outside the mathematical domain of an operation."""


class ConfigError(FluxLabError):
    """Invalid or inconsistent configuration value."""


class FormatError(FluxLabError):
    """On-disk artifact does not match its declared layout."""


class CFLViolationError(FluxLabError):
    """Requested time step exceeds the stability bound."""


class DivergenceError(FluxLabError):
    """Numerical solution blew up."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class RolloutError(FluxLabError):
    """Autoregressive prediction produced a non-finite state."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step
