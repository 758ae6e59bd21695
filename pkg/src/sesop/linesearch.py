"""Small-dimensional smooth convex minimization for step widths and
orthogonalization coefficients.

Both objectives only involve vectors of the dual space, so evaluating them
never touches the forward operator; they are cheap and a quasi-Newton
method with backtracking is used throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .lp import LpSpec, lp_norm

__all__ = [
    "SmoothConvexProblem",
    "LineSearchConfig",
    "MinimizeResult",
    "NonFiniteError",
    "minimize",
    "sesop_objective",
    "orthogonalization_objective",
]

ARMIJO_C1 = 1e-4
SHRINK = 0.5
MAX_BACKTRACK = 80
WOLFE_DELTA = 0.1
WOLFE_SIGMA = 0.9
VALUE_NOISE = 1e-12


class NonFiniteError(FloatingPointError):
    """Objective returned NaN; ``point`` holds the offending argument."""

    def __init__(self, point, message="objective is not finite"):
        super().__init__(f"{message} at t={np.array2string(np.asarray(point), precision=6)}")
        self.point = np.array(point, dtype=float)


@dataclass(frozen=True)
class SmoothConvexProblem:
    """``evaluate(t)`` returns ``(value, gradient)`` for ``t`` in R^dimension."""

    dimension: int
    evaluate: Callable[[np.ndarray], tuple]

    def __call__(self, t):
        return self.evaluate(np.asarray(t, dtype=float))


@dataclass
class LineSearchConfig:
    grad_tol: float = 1e-10
    max_iter: int = 20
    initial_point: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if int(self.max_iter) < 1:
            raise ValueError("max_iter must be at least 1")
        self.max_iter = int(self.max_iter)


class MinimizeResult(NamedTuple):
    t: np.ndarray
    value: float
    grad_norm: float
    iterations: int
    converged: bool


def _eval(problem, t):
    f, g = problem(t)
    f = float(f)
    g = np.asarray(g, dtype=float)
    if np.isnan(f) or not np.all(np.isfinite(g)):
        if np.isinf(f):
            return np.inf, g
        raise NonFiniteError(t)
    return f, g


def minimize(problem: SmoothConvexProblem, config: LineSearchConfig) -> MinimizeResult:
    """Minimize a smooth convex function with BFGS and Armijo backtracking.

    Stops when the Euclidean gradient norm drops to ``config.grad_tol`` or
    after ``config.max_iter`` quasi-Newton steps. Accepted steps satisfy the
    Armijo condition, or, when the decrease is below the rounding level of
    the function value, the approximate Wolfe condition; the returned value
    thus never exceeds the initial one by more than rounding. Whenever the curvature pair is not
    positive the inverse Hessian is discarded and the next step is a
    steepest-descent step.
    """
    n = problem.dimension
    t = (
        np.zeros(n)
        if config.initial_point is None
        else np.array(config.initial_point, dtype=float).reshape(n)
    )
    f, g = _eval(problem, t)
    if not np.isfinite(f):
        raise NonFiniteError(t, "objective is infinite at the initial point")
    gnorm = float(np.linalg.norm(g))
    H = None
    it = 0
    while it < config.max_iter:
        if gnorm <= config.grad_tol:
            return MinimizeResult(t, f, gnorm, it, True)
        if H is not None:
            d = -H @ g
            slope = float(g @ d)
            if not slope < 0:
                H = None
        if H is None:
            # steepest descent scaled to the size of the current point
            tn = float(np.linalg.norm(t))
            d = -g * (max(tn, 1.0) / gnorm if tn > 0 else 1.0 / gnorm)
            slope = float(g @ d)
        alpha = 1.0
        for _ in range(MAX_BACKTRACK):
            t_new = t + alpha * d
            f_new, g_new = _eval(problem, t_new)
            if f_new <= f + ARMIJO_C1 * alpha * slope:
                break
            if _approx_wolfe(f, f_new, slope, float(g_new @ d)):
                break
            alpha = _shrink(alpha, f, slope, f_new)
        else:
            # no admissible step at machine resolution; t is as good as it gets
            return MinimizeResult(t, f, gnorm, it, False)
        it += 1
        s = t_new - t
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-14 * np.linalg.norm(s) * np.linalg.norm(y) and sy > 0:
            rho = 1.0 / sy
            if H is None:
                H = np.eye(n) * (sy / float(y @ y))
            Hy = H @ y
            H = (
                H
                - rho * (np.outer(s, Hy) + np.outer(Hy, s))
                + (rho * rho * float(y @ Hy) + rho) * np.outer(s, s)
            )
        else:
            H = None
        if f_new == f and np.array_equal(t_new, t):
            t, f, g = t_new, f_new, g_new
            gnorm = float(np.linalg.norm(g))
            return MinimizeResult(t, f, gnorm, it, gnorm <= config.grad_tol)
        t, f, g = t_new, f_new, g_new
        gnorm = float(np.linalg.norm(g))
    return MinimizeResult(t, f, gnorm, it, gnorm <= config.grad_tol)


def _approx_wolfe(f0, f_alpha, slope, slope_alpha):
    """Approximate Wolfe test of Hager and Zhang for steps whose decrease is
    hidden by rounding in ``f``: the value may not rise by more than a few
    ulps and the directional derivative must have been reduced enough."""
    if not np.isfinite(f_alpha) or f_alpha > f0 + VALUE_NOISE * abs(f0):
        return False
    return WOLFE_SIGMA * slope <= slope_alpha <= (2.0 * WOLFE_DELTA - 1.0) * slope


def _shrink(alpha, f0, slope, f_alpha):
    """Minimizer of the quadratic interpolating f(0), f'(0) and f(alpha),
    safeguarded to [alpha/10, alpha/2]."""
    if np.isfinite(f_alpha):
        curv = f_alpha - f0 - slope * alpha
        if curv > 0:
            trial = -slope * alpha * alpha / (2.0 * curv)
            return min(max(trial, 0.1 * alpha), SHRINK * alpha)
    return SHRINK * alpha


def _stack(vectors, dim):
    if isinstance(vectors, np.ndarray) and vectors.ndim == 2:
        return vectors
    rows = [np.asarray(getattr(v, "values", v), dtype=float) for v in vectors]
    if not rows:
        return np.zeros((0, dim))
    W = np.vstack(rows)
    if W.shape[1] != dim:
        raise ValueError(f"directions have length {W.shape[1]}, expected {dim}")
    return W


def sesop_objective(J_xn, directions: Sequence, offsets, space: LpSpec) -> SmoothConvexProblem:
    """Step-width functional over the current search space.

    ``h(t) = ||J(x_n) - sum_k t_k u_k||^{r*} / r* + sum_k t_k alpha_k`` with the
    dual norm and dual gauge power ``r*`` of ``space``. Its gradient is
    ``-<u_j, J*(J(x_n) - sum_k t_k u_k)> + alpha_j``.
    """
    xi = np.asarray(getattr(J_xn, "values", J_xn), dtype=float)
    W = _stack(directions, xi.shape[0])
    if W.shape[0] == 0:
        raise ValueError("search space is empty")
    alpha = np.asarray(offsets, dtype=float).reshape(-1)
    if alpha.shape[0] != W.shape[0]:
        raise ValueError("need one offset per direction")
    dual = space.dual()
    qs, rs = dual.p, dual.power

    def evaluate(t):
        v = xi - W.T @ t
        nv = lp_norm(v, qs)
        val = nv**rs / rs + float(t @ alpha)
        grad = -(W @ _dual_J(v, nv, qs, rs)) + alpha
        return val, grad

    return SmoothConvexProblem(W.shape[0], evaluate)


def orthogonalization_objective(d_n, old_directions: Sequence, space: LpSpec) -> SmoothConvexProblem:
    """Distance functional of the metric projection onto the old search space.

    ``g(s) = ||d_n - sum_i s_i w_i||^{r*}`` in the dual norm, raised to the
    dual gauge power ``r*``; gradient ``-r* <w_j, J*(d_n - sum_i s_i w_i)>``.
    With no old directions the problem is zero-dimensional and
    ``g = ||d_n||^{r*}``.
    """
    d = np.asarray(getattr(d_n, "values", d_n), dtype=float)
    W = _stack(old_directions, d.shape[0])
    dual = space.dual()
    qs, rs = dual.p, dual.power

    def evaluate(s):
        v = d - W.T @ s
        nv = lp_norm(v, qs)
        val = nv**rs
        grad = -rs * (W @ _dual_J(v, nv, qs, rs))
        return val, grad

    return SmoothConvexProblem(W.shape[0], evaluate)


def _dual_J(v, nv, p, power):
    # duality map with a precomputed norm
    if nv == 0.0:
        return np.zeros_like(v)
    u = v / nv
    j = u if p == 2.0 else np.sign(u) * np.abs(u) ** (p - 1.0)
    return (nv if power == 2.0 else nv ** (power - 1.0)) * j
