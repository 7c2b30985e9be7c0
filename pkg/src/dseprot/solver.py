"""Weighted Gauss-Newton estimation over one measurement window."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import config
from .chi2 import chi_squared_confidence
from .models import (
    MeasurementWindow,
    ModelSpec,
    evaluate_h,
    evaluate_jacobian,
    initial_guess,
    parameter_bounds,
    project_state,
)


_TINY = np.finfo(float).tiny


class SingularSystemError(ArithmeticError):
    """The damped normal equations could not be solved."""


@dataclass(frozen=True)
class SolverOptions:
    max_iterations: int = config.MAX_ITERATIONS
    delta_J_threshold: float = config.DELTA_J_THRESHOLD
    J_floor: float = config.J_FLOOR
    damping: float = config.DAMPING

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.delta_J_threshold > 0:
            raise ValueError("delta_J_threshold must be positive")
        if not self.J_floor >= 0:
            raise ValueError("J_floor must be non-negative")
        if not self.damping >= 0:
            raise ValueError("damping must be non-negative")


@dataclass(frozen=True)
class Estimate:
    x_hat: np.ndarray
    J: float
    iterations: int
    converged: bool
    confidence: float
    dof: int
    params_out: dict[str, float] = field(default_factory=dict)


def weighted_residual(window: MeasurementWindow, spec: ModelSpec, x) -> np.ndarray:
    """``(z - h(x)) / sigma`` row by row; ``J`` is its squared norm."""
    if spec.sigma_v <= 0 or spec.sigma_i <= 0:
        raise ValueError("sigma_v and sigma_i must be positive")
    if window.N != spec.N:
        raise ValueError(f"window has {window.N} samples, model expects {spec.N}")
    return (window.z() - evaluate_h(spec, x, window.dt)) * spec.weights()


def _log_J(J: float, floor: float) -> float:
    return math.log(max(J, floor, _TINY))


def _solve(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(str(exc)) from exc


def gauss_newton_solve(
    spec: ModelSpec,
    window: MeasurementWindow,
    x0=None,
    opts: SolverOptions | None = None,
) -> Estimate:
    opts = opts or SolverOptions()
    if x0 is None:
        x0 = initial_guess(spec, window)
    x = project_state(spec, np.array(x0, dtype=float))
    w = spec.weights()
    z = window.z()
    dt = window.dt

    bounds = parameter_bounds(spec)
    eps = (z - evaluate_h(spec, x, dt)) * w
    J = float(eps @ eps)
    converged = J < opts.J_floor
    iterations = 0
    while not converged and iterations < opts.max_iterations:
        iterations += 1
        H = evaluate_jacobian(spec, x, dt) * w[:, None]
        A = H.T @ H
        d = A.diagonal().copy()
        d[d <= 0] = 1.0
        A.flat[:: A.shape[0] + 1] += opts.damping * d
        rhs = H.T @ eps
        step = _solve(A, rhs)
        # a parameter sitting on its bound and pushed outward is held there
        # for this step; the rest of the state is solved without it
        held = [j for j, lo, hi in bounds if (x[j] <= lo and step[j] < 0) or (x[j] >= hi and step[j] > 0)]
        if held:
            free = np.ones(spec.n_states, dtype=bool)
            free[held] = False
            step = np.zeros(spec.n_states)
            step[free] = _solve(A[np.ix_(free, free)], rhs[free])
        if not np.all(np.isfinite(step)):
            raise SingularSystemError("non-finite Gauss-Newton step")
        x = project_state(spec, x + step)
        eps = (z - evaluate_h(spec, x, dt)) * w
        J_new = float(eps @ eps)
        delta_J = abs(_log_J(J_new, opts.J_floor) - _log_J(J, opts.J_floor))
        J = J_new
        if J < opts.J_floor or delta_J < opts.delta_J_threshold:
            converged = True

    return Estimate(
        x_hat=x,
        J=J,
        iterations=iterations,
        converged=converged,
        confidence=chi_squared_confidence(J, spec.dof),
        dof=spec.dof,
        params_out=spec.params_out(x),
    )


def estimate_window(spec: ModelSpec, window: MeasurementWindow, opts: SolverOptions | None = None) -> Estimate:
    """Initial guess plus solve, the per-window step a worker runs."""
    return gauss_newton_solve(spec, window, initial_guess(spec, window), opts)
