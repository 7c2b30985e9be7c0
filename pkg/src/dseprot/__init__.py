"""Dynamic-state-estimation protection for an inverter-fed load bus."""

from .chi2 import chi_squared_cdf, chi_squared_confidence
from .models import (
    MeasurementWindow,
    ModelKind,
    ModelSpec,
    Sample,
    SystemParams,
    build_model,
    evaluate_h,
    evaluate_jacobian,
    initial_guess,
    simulate_branch_currents,
)
from .solver import (
    Estimate,
    SingularSystemError,
    SolverOptions,
    estimate_window,
    gauss_newton_solve,
    weighted_residual,
)

__all__ = [
    "Estimate",
    "MeasurementWindow",
    "ModelKind",
    "ModelSpec",
    "Sample",
    "SingularSystemError",
    "SolverOptions",
    "SystemParams",
    "build_model",
    "chi_squared_cdf",
    "chi_squared_confidence",
    "estimate_window",
    "evaluate_h",
    "evaluate_jacobian",
    "gauss_newton_solve",
    "initial_guess",
    "simulate_branch_currents",
    "weighted_residual",
]

__version__ = "0.1.0"
