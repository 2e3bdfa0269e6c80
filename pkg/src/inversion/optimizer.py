"""
Fletcher-Reeves conjugate gradients over cell coefficients with a projected
Armijo backtracking line search
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from ..utils.errors import LineSearchStall

logger = logging.getLogger(__name__)

# Relative change of ||eps|| below which an iterate counts as stabilized
STABILIZATION_TOL = 1e-3


@dataclass
class CGState:
    """
    Iteration state carried between CG steps.

    Attributes:
        m: Number of completed steps
        direction: Last search direction d^{m-1} (None before the first step)
        grad_norm_sq: ||L'^{m-1}||^2 of the last step
        beta: Fletcher-Reeves ratio used for the last direction
        alpha: Last accepted step length
    """
    m: int = 0
    direction: Optional[np.ndarray] = None
    grad_norm_sq: float = 0.0
    beta: float = 0.0
    alpha: float = 0.0


@dataclass(frozen=True)
class StopDecision:
    stop: bool
    reason: str = ""


def weighted_inner(a, b, volumes) -> float:
    """Cell-volume weighted inner product"""
    return float(np.sum(np.asarray(volumes) * np.asarray(a) * np.asarray(b)))


# (x, f0, grad, direction) -> (alpha, x_new, f_new)
LineSearch = Callable[[np.ndarray, float, np.ndarray, np.ndarray], Tuple[float, np.ndarray, float]]


def armijo_backtracking(func: Callable[[np.ndarray], float], volumes, c: float = 1e-4, shrink: float = 0.5,
                        max_trials: int = 30, max_update: float = 1.0,
                        project: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> LineSearch:
    """
    Build a projected Armijo line search.

    The first trial moves the largest cell by `max_update`; each rejection
    multiplies the step by `shrink`. A trial is accepted when
    F(x_new) <= F(x) + c min(<L', x_new - x>, 0), so accepted steps never
    increase F.
    """
    if not 0 < c < 1 or not 0 < shrink < 1:
        raise ValueError("Armijo parameters must lie in (0, 1)")

    def search(x, f0, grad, direction):
        scale = float(np.max(np.abs(direction)))
        if scale == 0.0:
            return 0.0, np.array(x, dtype=float), f0
        alpha = max_update / scale
        for trial in range(max_trials):
            x_new = x + alpha * direction
            if project is not None:
                x_new = project(x_new)
            decrease = weighted_inner(grad, x_new - x, volumes)
            f_new = func(x_new)
            if np.isfinite(f_new) and f_new <= f0 + c * min(decrease, 0.0):
                logger.debug(f"Armijo accepted alpha={alpha:.3e} after {trial + 1} trials")
                return alpha, x_new, f_new
            alpha *= shrink
        raise LineSearchStall(f"No sufficient decrease after {max_trials} trials", trials=max_trials)

    return search


def cg_step(state: CGState, grad, eps, f0: float, volumes, line_search: LineSearch):
    """
    One Fletcher-Reeves step eps^{m+1} = eps^m + alpha d^m.

    Args:
        state: State after the previous step
        grad: L'^m as a cell density
        eps: Current cell values
        f0: F(eps^m)
        volumes: Cell volumes defining the norm
        line_search: Step length rule

    Returns:
        (eps_new, new state, F(eps_new), stop) where stop is True when L'^m
        vanishes and nothing moved
    """
    grad = np.asarray(grad, dtype=float)
    eps = np.asarray(eps, dtype=float)
    norm_sq = weighted_inner(grad, grad, volumes)
    if norm_sq == 0.0:
        return eps.copy(), state, f0, True

    if state.direction is None or state.grad_norm_sq == 0.0:
        beta = 0.0
        direction = -grad
    else:
        beta = norm_sq / state.grad_norm_sq
        direction = -grad + beta * state.direction
        if weighted_inner(grad, direction, volumes) >= 0.0:
            # Not a descent direction, restart from steepest descent
            logger.debug(f"CG restart at m={state.m}")
            beta = 0.0
            direction = -grad

    alpha, eps_new, f_new = line_search(eps, f0, grad, direction)
    new_state = CGState(m=state.m + 1, direction=direction, grad_norm_sq=norm_sq, beta=beta, alpha=alpha)
    return eps_new, new_state, f_new, False


def check_stop(grad_norm: float, eps_norms: Sequence[float], theta: float,
               tol: float = STABILIZATION_TOL) -> StopDecision:
    """
    Stop when ||L'|| <= theta, or when ||eps|| changed by less than `tol`
    (relative) over each of the last two iterations.
    """
    if grad_norm <= theta:
        return StopDecision(True, "gradient")
    if len(eps_norms) >= 3:
        a, b, c = eps_norms[-3], eps_norms[-2], eps_norms[-1]
        if abs(b - a) <= tol * max(abs(a), 1e-300) and abs(c - b) <= tol * max(abs(b), 1e-300):
            return StopDecision(True, "stabilized")
    return StopDecision(False)


def select_refinement(indicator, beta1: float) -> np.ndarray:
    """Indices of the cells with |L'| >= beta1 * max |L'|"""
    if not 0 < beta1 < 1:
        raise ValueError(f"Refinement fraction must lie in (0, 1), got {beta1}")
    magnitude = np.abs(np.asarray(indicator, dtype=float))
    if magnitude.size == 0:
        return np.zeros(0, dtype=int)
    return np.flatnonzero(magnitude >= beta1 * magnitude.max())
