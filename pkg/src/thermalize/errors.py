"""Exception types raised across the package."""


class ThermalizeError(Exception):
    """Base class for all package errors."""


class ParameterError(ThermalizeError, ValueError):
    pass


class UnsupportedMergeError(ThermalizeError):
    pass


class InstabilityError(ThermalizeError):
    """Dynamical matrix has a genuinely negative eigenvalue."""


class TimeOrderingError(ThermalizeError):
    pass


class UnsupportedStateError(ThermalizeError):
    """Operation needs a coherent (unsqueezed) mode."""


class IllConditionedDensityError(ThermalizeError):
    pass


class EmptyEnsembleError(ThermalizeError):
    pass


class BoundaryError(ThermalizeError):
    """Requested energy lies outside the tabulated level density."""


class TruncationError(ThermalizeError):
    pass


class StabilityError(ThermalizeError):
    """Integrator time step does not resolve the contact oscillation."""


class InsufficientStatisticsError(ThermalizeError):
    pass
