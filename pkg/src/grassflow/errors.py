"""Exception and warning types shared by all solver modules."""


class GrassflowError(Exception):
    """Base class for solver failures."""


class InvalidInputError(GrassflowError, ValueError):
    """Input data are malformed (non-finite samples, wrong shapes, bad parameters)."""


class DomainError(GrassflowError, ValueError):
    """An argument lies outside the domain where an operation is defined."""


class PoleError(GrassflowError):
    """A denominator of a Riccati projection vanished.

    ``blow_up_time`` carries the analytic blow-up time when one is known and
    ``bracket`` a ``(t_lo, t_hi)`` interval when the crossing was located
    numerically.  ``s`` is the offending frequency, if any.
    """

    def __init__(self, message, *, s=None, blow_up_time=None, bracket=None):
        super().__init__(message)
        self.s = s
        self.blow_up_time = blow_up_time
        self.bracket = bracket


class BlowUpError(PoleError):
    """Finite-time blow-up of an evolution (singular matrix, divergence)."""


class ContourError(GrassflowError):
    """Bromwich quadrature produced an imaginary residual above tolerance."""


class LimitError(GrassflowError):
    """Richardson extrapolation of a limit did not converge."""


class ShockError(GrassflowError):
    """The characteristic map is not invertible (caustic or Newton failure)."""


class StepSizeError(GrassflowError):
    """An explicit time stepper violated its stability bound or went unstable."""


class ProjectionError(GrassflowError):
    """The linear system defining the projected solution is numerically singular."""


class InvariantError(GrassflowError):
    """A conserved or defining identity was violated beyond tolerance."""


class SingularityError(GrassflowError):
    """An integrand vanished or blew up inside its integration range."""


class TruncationWarning(UserWarning):
    """A truncated integral or domain dropped a non-negligible tail."""


class FieldOverflowError(GrassflowError):
    """A time-stepped field became non-finite; ``step`` is the failing step index."""

    def __init__(self, message, *, step=None):
        super().__init__(message)
        self.step = step
