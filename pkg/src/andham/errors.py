class AndhamError(Exception):
    """Base class for all numerical and configuration failures."""


class UnresolvedMollifier(AndhamError):
    pass


class SingularPoint(AndhamError):
    pass


class GridMismatch(AndhamError):
    pass


class QuadratureFailure(AndhamError):
    pass


class NotPositiveDefinite(AndhamError):
    pass


class MaxIterations(AndhamError):
    pass


class Diverged(AndhamError):
    pass


class NoConvergence(AndhamError):
    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class InsufficientTailMass(AndhamError):
    pass


class GeometryError(AndhamError):
    pass


class ConfigError(AndhamError):
    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field
