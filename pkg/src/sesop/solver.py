"""Sequential subspace optimization for A x = y in lp spaces.

Each iteration computes the Landweber descent direction, adds it (raw or
metric-orthogonalized) to the search space and moves the dual iterate
``J(x_n)`` along the optimal combination of the stored directions.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .linesearch import LineSearchConfig, minimize, sesop_objective
from .lp import LpSpec, PrimalVector, conjugate_exponent, lp_norm, duality_map_array
from .lp import modulus_smoothness_bound, xu_roach_constants
from .search_space import Mode, SearchSpaceState

__all__ = [
    "SolverConfig",
    "IterationRecord",
    "SolveResult",
    "SolverError",
    "landweber_direction",
    "step_width_seed",
    "xu_roach_tau",
    "assert_residual_orthogonality",
    "solve",
]

log = logging.getLogger(__name__)

GAMMA = 0.95
NOISE_FACTOR = 4.0


class SolverError(RuntimeError):
    """Failure inside an iteration; ``iteration`` is the step index."""

    def __init__(self, iteration: int, cause: BaseException):
        super().__init__(f"iteration {iteration}: {type(cause).__name__}: {cause}")
        self.iteration = iteration
        self.cause = cause


@dataclass
class SolverConfig:
    space: LpSpec
    r: float = 2.0
    N: int = 1
    mode: Mode = Mode.METRIC
    max_iter: int = 1000
    residual_tol: float = 1e-4
    residual_tol_kind: str = "relative"
    discrepancy_tau: Optional[float] = None
    noise_level: Optional[float] = None
    tau_seed_mode: str = "heuristic"
    line_search: LineSearchConfig = field(default_factory=LineSearchConfig)
    # raise AssertionError when a scaled orthogonality violation exceeds this
    debug_tol: Optional[float] = None
    # keep (directions, offsets, t) of every step, for inspection of the dual iterate
    record_steps: bool = False

    def __post_init__(self):
        self.mode = Mode.parse(self.mode)
        if not self.r > 1:
            raise ValueError("r must exceed 1")
        if int(self.N) < 1:
            raise ValueError("N must be at least 1")
        if int(self.max_iter) < 0:
            raise ValueError("max_iter must be non-negative")
        if not self.residual_tol > 0:
            raise ValueError("residual_tol must be positive")
        if self.residual_tol_kind not in ("absolute", "relative"):
            raise ValueError("residual_tol_kind must be 'absolute' or 'relative'")
        if self.discrepancy_tau is not None:
            if self.discrepancy_tau < 1:
                raise ValueError("discrepancy_tau must be at least 1")
            if self.noise_level is None:
                raise ValueError("discrepancy stopping needs a noise level")
        if self.noise_level is not None and self.noise_level < 0:
            raise ValueError("noise level must be non-negative")
        if self.tau_seed_mode not in ("heuristic", "xu-roach"):
            raise ValueError("tau_seed_mode must be 'heuristic' or 'xu-roach'")
        self.N = int(self.N)
        self.max_iter = int(self.max_iter)


@dataclass
class IterationRecord:
    n: int
    residual: float
    relative_residual: float
    bregman_to_reference: Optional[float]
    error_norm: Optional[float]
    wall_ms: float
    semi_orthogonality: float = float("nan")
    residual_orthogonality: float = float("nan")
    inner_iterations: int = 0


@dataclass
class SolveResult:
    x_final: PrimalVector
    records: List[IterationRecord]
    stop_reason: str
    steps: list = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return self.records[-1].n


def landweber_direction(A, x_n, y, r: float = 2.0):
    """Landweber descent direction ``A^T J_r(A x_n - y)``.

    Returns ``(d, d_precursor, residual)`` with ``d_precursor = J_r(A x_n - y)``
    taken in Y = lr with gauge power r, and ``residual = ||A x_n - y||_r``.
    """
    rho = A.apply(getattr(x_n, "values", x_n)) - np.asarray(y, dtype=float)
    d_pre = duality_map_array(rho, r, r)
    return A.apply_adjoint(d_pre), d_pre, lp_norm(rho, r)


def xu_roach_tau(x_norm: float, w_norm: float, residual: float, space: LpSpec, r: float) -> float:
    """Solve ``rho*(tau)/tau = min(rho*(1), gamma / (2^{r*} G_p) R^r / (||x|| ||w||))``
    for ``tau`` in (0, 1] by bisection, with ``rho*`` the analytic bound on the
    modulus of smoothness of X*."""
    q = conjugate_exponent(space.p)
    rs = conjugate_exponent(space.power)
    G = xu_roach_constants(space.p)[0]

    def ratio(tau):
        return modulus_smoothness_bound(tau, q) / tau

    target = min(ratio(1.0), GAMMA / (2.0**rs * G) * residual**r / (x_norm * w_norm))
    if target >= ratio(1.0):
        return 1.0
    lo, hi = 0.0, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if ratio(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    return 0.5 * (lo + hi)


def step_width_seed(x_n, w_new, residual: float, A_norm: float, config: SolverConfig) -> float:
    """Starting step ``nu = tau ||x_n||^{power-1} / ||w||`` for the newest direction.

    ``tau = 1`` in heuristic mode; in xu-roach mode it comes from
    :func:`xu_roach_tau`. For ``x_n = 0`` the residual-scaled fallback
    ``max(R^{r-1} / ||A||^2, 1)`` is used.
    """
    space = config.space
    x = np.asarray(getattr(x_n, "values", x_n), dtype=float)
    w = np.asarray(getattr(w_new, "values", w_new), dtype=float)
    w_norm = lp_norm(w, conjugate_exponent(space.p))
    if w_norm == 0.0:
        raise ValueError("search direction is zero")
    x_norm = lp_norm(x, space.p)
    if x_norm == 0.0:
        if A_norm > 0:
            return max(residual ** (config.r - 1.0) / A_norm**2, 1.0)
        return 1.0
    if config.tau_seed_mode == "xu-roach":
        tau = xu_roach_tau(x_norm, w_norm, residual, space, config.r)
    else:
        tau = 1.0
    return tau * x_norm ** (space.power - 1.0) / w_norm


def assert_residual_orthogonality(state: SearchSpaceState, residual_vec, tol: Optional[float] = None, r: float = 2.0) -> float:
    """Largest ``|<w*, A x_n - y>| / (||w*|| ||A x_n - y||)`` over stored precursors.

    Raises ``AssertionError`` if ``tol`` is given and exceeded.
    """
    rho = np.asarray(residual_vec, dtype=float)
    rn = lp_norm(rho, r)
    if not state.precursors or rn == 0.0:
        return 0.0
    rs = conjugate_exponent(r)
    worst = 0.0
    for wp in state.precursors:
        nw = lp_norm(wp, rs)
        if nw > 0:
            worst = max(worst, abs(float(np.dot(wp, rho))) / (nw * rn))
    if tol is not None and worst > tol:
        raise AssertionError(f"residual orthogonality violated: {worst:.3e} > {tol:.3e}")
    return worst


def solve(A, y, x0=None, config: SolverConfig = None, reference=None) -> SolveResult:
    """Run the subspace iteration until a stopping rule fires.

    Parameters
    ----------
    A : operator
        Dense or sparse operator with ``apply`` and ``apply_adjoint``.
    y : array
        Right-hand side (possibly noisy).
    x0 : array or PrimalVector, optional
        Start; defaults to zero, which trivially has ``J(x0)`` in the range
        of the adjoint.
    config : SolverConfig
    reference : array or PrimalVector, optional
        A known solution; enables Bregman-distance and error telemetry.

    Returns
    -------
    SolveResult
        ``stop_reason`` is one of ``residual_met``, ``discrepancy_met``,
        ``max_iter`` and ``exact_zero_residual``.
    """
    if config is None:
        raise ValueError("a SolverConfig is required")
    space = config.space
    y = np.asarray(y, dtype=float)
    if y.shape != (A.rows,):
        raise ValueError(f"right-hand side has shape {y.shape}, operator has {A.rows} rows")
    if A.cols != space.dim:
        raise ValueError(f"operator has {A.cols} columns, space has dim {space.dim}")
    x = np.zeros(space.dim) if x0 is None else np.array(getattr(x0, "values", x0), dtype=float)
    if x.shape != (space.dim,):
        raise ValueError("x0 has the wrong length")
    z = None if reference is None else np.asarray(getattr(reference, "values", reference), dtype=float)

    r = config.r
    dual = space.dual()
    rstar = conjugate_exponent(r)
    ynorm = lp_norm(y, r)
    state = SearchSpaceState(space, config.N, config.mode)
    ls = config.line_search
    xi = space.J(x)  # dual iterate J(x_n), updated without round trips
    records: List[IterationRecord] = []
    steps = []
    prev_t = None
    A_norm = None
    start = time.perf_counter()
    stop_reason = "max_iter"

    for n in range(config.max_iter + 1):
        try:
            rho = A.apply(x) - y
            R = lp_norm(rho, r)
            rel = R / ynorm if ynorm > 0 else R
            rec = IterationRecord(
                n=n,
                residual=R,
                relative_residual=rel,
                bregman_to_reference=None if z is None else space.bregman(x, z),
                error_norm=None if z is None else lp_norm(x - z, space.p),
                wall_ms=1e3 * (time.perf_counter() - start),
            )
            rec.residual_orthogonality = assert_residual_orthogonality(state, rho, config.debug_tol, r)
            records.append(rec)

            if R == 0.0:
                stop_reason = "exact_zero_residual"
                break
            if config.discrepancy_tau is not None and rel <= config.discrepancy_tau * config.noise_level:
                stop_reason = "discrepancy_met"
                break
            measured = R if config.residual_tol_kind == "absolute" else rel
            if measured <= config.residual_tol:
                stop_reason = "residual_met"
                break
            if n == config.max_iter:
                break

            d_pre = duality_map_array(rho, r, r)
            d = A.apply_adjoint(d_pre)
            alpha = float(np.dot(d_pre, y))
            evicting = state.mode is not Mode.EXPANDING and len(state) >= state.capacity
            state.push(d, d_pre, alpha, ls)
            if state.mode is Mode.METRIC:
                rec.semi_orthogonality = state.verify_semi_orthogonality(config.debug_tol)

            W = state.matrix
            k = W.shape[0]
            # minimize over unit-norm directions; a diagonal rescaling of t
            scale = np.array([lp_norm(w, dual.p) for w in W])
            problem = sesop_objective(xi, W / scale[:, None], np.asarray(state.offsets) / scale, space)
            if A_norm is None and (config.tau_seed_mode == "xu-roach" or not np.any(x)):
                A_norm = A.norm()
            nu = step_width_seed(x, W[-1], R, A_norm or 0.0, config)
            seed = np.zeros(k)
            seed[-1] = nu
            candidates = [seed, np.zeros(k)]
            if state.mode is Mode.METRIC and prev_t is not None:
                shifted = np.concatenate([prev_t[1:] if evicting else prev_t, [nu]])
                if shifted.shape[0] == k:
                    candidates.append(shifted)
            candidates = [c * scale for c in candidates]
            values = [problem(c)[0] for c in candidates]
            t0 = candidates[int(np.argmin(values))]
            pre_scale = np.array([lp_norm(wp, rstar) for wp in state.precursors]) / scale
            # below the rounding level of <w, x> - alpha the gradient is noise
            noise = np.finfo(float).eps * (np.abs(W) @ np.abs(x) + np.abs(state.offsets)) / scale
            tol = max(ls.grad_tol * R * float(pre_scale.min()), NOISE_FACTOR * float(np.linalg.norm(noise)))
            res = minimize(problem, LineSearchConfig(tol, ls.max_iter, t0))
            rec.inner_iterations = res.iterations
            t = res.t / scale
            xi = xi - W.T @ t
            x = dual.J(xi)
            prev_t = t
            if config.record_steps:
                steps.append((W, np.array(state.offsets), t.copy()))
        except (AssertionError, KeyboardInterrupt):
            raise
        except Exception as exc:  # noqa: BLE001 - re-raised with the step index
            raise SolverError(n, exc) from exc

    log.debug("stopped after %d iterations: %s", records[-1].n, stop_reason)
    return SolveResult(PrimalVector(x, space), records, stop_reason, steps)
