"""Exception types raised across the package."""


class FKdVError(Exception):
    """Base class for all package errors."""


class ConfigurationError(FKdVError, ValueError):
    """Invalid grid, parameters or scenario configuration."""


class DomainError(FKdVError, ValueError):
    """An operation was requested outside its mathematical domain."""


class ConvergenceError(FKdVError, RuntimeError):
    """An iterative solver failed to converge."""


class DegenerateInitError(ConvergenceError):
    """A fixed-point iteration collapsed to the zero state."""


class ResolutionError(FKdVError, ValueError):
    """A field is not resolved on the requested grid."""


class SpectralAnomalyError(FKdVError, RuntimeError):
    """The discrete spectrum contradicts the expected structure."""


class FlowError(FKdVError, RuntimeError):
    """Constrained gradient flow failed to decrease the energy."""


class OutOfTubeError(FKdVError, RuntimeError):
    """Modulation fit did not converge: the state left the tube."""


class TubeTooLargeError(OutOfTubeError):
    """Modulation Jacobian is near-singular."""


class CutoffLeakError(FKdVError, ValueError):
    """Virial cutoff support does not fit inside the periodic box."""


class CriticalityClassError(FKdVError, ValueError):
    """Driver invoked in the wrong criticality regime."""


class GridMismatchError(FKdVError, ValueError):
    """Fields defined on different grids were combined."""
