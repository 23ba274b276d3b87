"""Exception types raised across the package."""


class ManipulantError(Exception):
    """Base class for package errors."""


class DimensionError(ManipulantError, ValueError):
    """Operands have incompatible shapes."""


class NotSpdError(ManipulantError, ValueError):
    """A matrix is not symmetric positive definite (or not symmetric)."""


class ConvergenceError(ManipulantError, RuntimeError):
    """An iterative routine hit its iteration cap.

    ``last`` holds the final iterate and ``residual`` the stopping quantity
    at that iterate.
    """

    def __init__(self, message, last=None, residual=None):
        super().__init__(message)
        self.last = last
        self.residual = residual


class UnreachableError(ManipulantError, ValueError):
    """A wrist pose lies outside the reachable annulus of an arm."""


class SingularConfigurationError(ManipulantError, ValueError):
    """A manipulability ellipsoid cannot be inverted."""

    def __init__(self, message, min_eigenvalue=None):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class GraspError(ManipulantError, ValueError):
    """Grasp model inconsistent with the arms or rank deficient."""


class EmptyComponentError(ManipulantError, RuntimeError):
    """A mixture component collapsed twice during EM."""


class DivergenceError(ManipulantError, RuntimeError):
    """A tracking simulation exceeded its divergence guard.

    ``trace`` is the partial run up to the abort.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class ConfigError(ManipulantError, ValueError):
    """Invalid configuration file or value."""
