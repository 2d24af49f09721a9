class ConfigError(ValueError):
    """Invalid configuration or preset request."""


class NumericsError(RuntimeError):
    """A numerical procedure failed its accuracy or convergence checks."""


class WindowError(NumericsError):
    """A spectral or temporal grid is too small for the field it carries."""
