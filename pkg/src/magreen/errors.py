"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: configuration problems exit with 2,
solver failures with 3.
"""


class MagreenError(Exception):
    """Base class for all package errors."""


class ConfigurationError(MagreenError):
    """Invalid grid, domain, parameter or experiment configuration."""


class ParameterError(ConfigurationError):
    """A numeric parameter is outside its admissible range."""


class DomainError(MagreenError):
    """A node set reaches outside the region it must stay in."""


class NotCompactlyContainedError(DomainError):
    """A section (or other set) is not compactly contained in its container."""


class DegenerateError(MagreenError):
    """An empty shell, empty set or vanishing gradient made a quantity undefined."""


class PreconditionError(MagreenError):
    """Input data violates a stated precondition (e.g. density bounds)."""


class AssemblyError(MagreenError):
    """The linearized operator could not be assembled."""


class InsufficientDataError(MagreenError):
    """Too few valid samples for a fit."""


class SolverFailureError(MagreenError):
    """An iterative or nonlinear solver did not converge.

    Attributes
    ----------
    residual : float
        Last residual reached before giving up.
    """

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class PositivityError(MagreenError):
    """A Green's function that must be positive is not."""
