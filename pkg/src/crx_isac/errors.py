"""Exception types shared across the package."""


class ConstraintViolation(ValueError):
    """An input violates a geometric or power constraint."""


class GeometryError(ValueError):
    """Antenna geometry is degenerate (e.g. coincident elements)."""


class UnobservableGeometry(ArithmeticError):
    """Target angle carries no Fisher information for this configuration."""


class EpisodeFinished(RuntimeError):
    """An already-terminated episode was stepped again."""


class DivergenceError(FloatingPointError):
    """Training produced NaN losses or gradients."""


class ConfigError(ValueError):
    """Experiment configuration is inconsistent or infeasible."""
