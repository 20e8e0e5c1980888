"""Numerical laboratory for multi-soliton trains of the nonlinear Klein-Gordon equation."""

from .bound_states import BoundState, Nonlinearity, SandboxPotential, ground_state_closed_form, solve_bound_state_newton
from .errors import (BlowUpError, ConditioningError, ConfigurationError, ConvergenceError, DomainError, LabError,
                     NumericalError, ShootingFailure)
from .fields import Grid1D, ScalarField, StateVector

__all__ = [
    "BlowUpError", "BoundState", "ConditioningError", "ConfigurationError", "ConvergenceError", "DomainError",
    "Grid1D", "LabError", "Nonlinearity", "NumericalError", "SandboxPotential", "ScalarField", "ShootingFailure",
    "StateVector", "ground_state_closed_form", "solve_bound_state_newton",
]
