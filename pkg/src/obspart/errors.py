"""Exception hierarchy shared by every obspart module."""


class ObspartError(Exception):
    """Base class for all library errors."""


class ModelError(ObspartError, ValueError):
    """Malformed system description or dimension mismatch."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class InstabilityError(ObspartError, ValueError):
    def __init__(self, message, spectral_radius=None):
        super().__init__(message)
        self.spectral_radius = spectral_radius


class ConvergenceError(ObspartError, RuntimeError):
    pass


class InfeasibleError(ObspartError, ValueError):
    """Budgets, capacities or subsets that violate a constraint."""


class GuardError(ObspartError, ValueError):
    """Brute-force enumeration would exceed its size guard."""


class EstimationError(ObspartError, ValueError):
    pass


class GraphError(ObspartError, ValueError):
    """Graph quantities that are undefined for the given input."""
