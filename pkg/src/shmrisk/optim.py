"""Deterministic minimizers for small dense parameter vectors.

Both routines take a callable returning (value, gradient) and run a fixed
maximum number of iterations, invoking an optional callback after every
accepted step.  They never randomize internally, so a caller that controls
its starting point gets reproducible trajectories.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = ["OptimizeResult", "OptimizationError", "minimize_scg", "minimize_gd"]


class OptimizationError(RuntimeError):
    """Raised when the objective turns non-finite during optimization."""


@dataclass
class OptimizeResult:
    x: np.ndarray
    fun: float
    n_iter: int
    converged: bool
    history: list = field(default_factory=list)


def _checked(fun_and_grad, x, iteration):
    value, gradient = fun_and_grad(x)
    if not math.isfinite(value) or not np.all(np.isfinite(gradient)):
        raise OptimizationError(
            f"objective became non-finite at iteration {iteration} "
            f"(value {value!r})"
        )
    return float(value), np.asarray(gradient, dtype=float)


def minimize_scg(
    fun_and_grad: Callable,
    x0: Sequence[float],
    max_iter: int = 500,
    grad_tol: float = 1e-8,
    callback: Callable | None = None,
) -> OptimizeResult:
    """Scaled conjugate gradients after Moller (1993).

    Trust-region style scaling replaces a line search: each candidate step
    is accepted only when it lowers the objective, so the history of
    accepted values is non-increasing by construction.
    """
    sigma0 = 1e-4
    w = np.array(x0, dtype=float)
    value, gradient = _checked(fun_and_grad, w, 0)
    residual = -gradient
    direction = residual.copy()
    success = True
    scale, raised_scale = 1e-6, 0.0
    since_restart = 0
    history = [value]
    converged = math.sqrt(residual @ residual) < grad_tol
    iterations = 0

    for iteration in range(1, max_iter + 1):
        if converged:
            break
        iterations = iteration
        direction_sq = float(direction @ direction)
        if direction_sq <= 1e-300:
            converged = True
            break
        if success:
            # curvature along the search direction by finite differencing
            # the gradient; sigma shrinks with the direction's length
            sigma = sigma0 / math.sqrt(direction_sq)
            _, gradient_ahead = _checked(fun_and_grad, w + sigma * direction, iteration)
            curvature = float(direction @ (gradient_ahead - gradient)) / sigma
        curvature_scaled = curvature + (scale - raised_scale) * direction_sq
        if curvature_scaled <= 0:
            raised_scale = 2.0 * (scale - curvature_scaled / direction_sq)
            curvature_scaled = -curvature_scaled + scale * direction_sq
            scale = raised_scale
        step_numerator = float(direction @ residual)
        step = step_numerator / curvature_scaled
        candidate = w + step * direction
        candidate_value, candidate_gradient = _checked(fun_and_grad, candidate, iteration)
        comparison = (
            2.0 * curvature_scaled * (value - candidate_value) / step_numerator**2
        )
        if comparison >= 0:
            w = candidate
            value = candidate_value
            gradient = candidate_gradient
            new_residual = -gradient
            raised_scale = 0.0
            success = True
            since_restart += 1
            if since_restart >= len(w):
                direction = new_residual.copy()
                since_restart = 0
            else:
                beta = (
                    float(new_residual @ new_residual) - float(new_residual @ residual)
                ) / step_numerator
                direction = new_residual + beta * direction
            residual = new_residual
            if comparison >= 0.75:
                scale = max(0.25 * scale, 1e-20)
            history.append(value)
            if callback is not None:
                callback(w, value)
            if math.sqrt(residual @ residual) < grad_tol:
                converged = True
        else:
            raised_scale = scale
            success = False
        if comparison < 0.25:
            scale += curvature_scaled * (1.0 - comparison) / direction_sq
        scale = min(scale, 1e100)

    return OptimizeResult(w, value, iterations, converged, history)


def minimize_gd(
    fun_and_grad: Callable,
    x0: Sequence[float],
    learning_rate: float = 0.05,
    momentum: float = 0.9,
    max_iter: int = 500,
    grad_tol: float = 1e-8,
    callback: Callable | None = None,
) -> OptimizeResult:
    """Plain gradient descent with classical momentum."""
    if learning_rate <= 0:
        raise ValueError("learning_rate must be positive")
    if not 0.0 <= momentum < 1.0:
        raise ValueError("momentum must lie in [0, 1)")
    w = np.array(x0, dtype=float)
    velocity = np.zeros_like(w)
    value, gradient = _checked(fun_and_grad, w, 0)
    history = [value]
    converged = math.sqrt(gradient @ gradient) < grad_tol
    iterations = 0
    for iteration in range(1, max_iter + 1):
        if converged:
            break
        iterations = iteration
        velocity = momentum * velocity - learning_rate * gradient
        w = w + velocity
        value, gradient = _checked(fun_and_grad, w, iteration)
        history.append(value)
        if callback is not None:
            callback(w, value)
        if math.sqrt(gradient @ gradient) < grad_tol:
            converged = True
    return OptimizeResult(w, value, iterations, converged, history)
