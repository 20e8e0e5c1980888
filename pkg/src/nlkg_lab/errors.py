"""Exception hierarchy shared by the lab modules."""


class LabError(Exception):
    """Base class for all lab errors."""


class ConfigurationError(LabError, ValueError):
    """Invalid configuration or mismatched inputs (CLI exit status 2)."""


class DomainError(LabError, ValueError):
    """A parameter lies outside the admissible domain (e.g. p <= 1, |beta| >= 1)."""


class NumericalError(LabError, RuntimeError):
    """A numerical procedure failed (CLI exit status 3)."""


class ConvergenceError(NumericalError):
    """An iteration did not reach its tolerance."""


class DegenerateSolutionError(NumericalError):
    """An iteration collapsed onto the trivial solution."""


class DiscretizationError(NumericalError):
    """Two discrete routes to the same quantity disagree beyond tolerance."""


class LemmaViolation(NumericalError):
    """A spectral or coercivity statement failed on the discrete problem."""


class ConditioningError(NumericalError):
    """A Gram or modulation matrix is too ill-conditioned to invert."""


class BlowUpError(NumericalError):
    """The evolved state left the admissible region."""

    def __init__(self, message, last_time=None):
        super().__init__(message)
        self.last_time = last_time


class ShootingFailure(NumericalError):
    """The shooting search ended without a parameter reaching T0."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best
