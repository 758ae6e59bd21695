"""Seeded random test problems, seed sweeps and a conjugate-gradient reference.

Random numbers come from numpy's PCG64 bit generator
(``numpy.random.default_rng(seed)``), so a seed fully determines a problem.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .linop import DenseOperator
from .lp import LpSpec, PrimalVector, lp_norm
from .search_space import Mode
from .solver import SolveResult, SolverConfig, SolverError, solve

__all__ = [
    "PRNG_NAME",
    "ToyProblem",
    "make_toy_problem",
    "cg_normal_polak_ribiere",
    "RunRecord",
    "CellStats",
    "GridStats",
    "aggregate",
    "run_grid",
    "write_history",
    "HISTORY_COLUMNS",
    "STATS_COLUMNS",
]

log = logging.getLogger(__name__)

PRNG_NAME = "numpy.random.PCG64"
HISTORY_COLUMNS = ("iter", "residual", "relative_residual", "bregman", "error_norm", "wall_ms")
STATS_COLUMNS = ("p", "N", "mode", "seed_count", "mean_iters", "std_iters", "mean_ms", "failures")


@dataclass(frozen=True)
class ToyProblem:
    A: DenseOperator
    x_true: PrimalVector
    y: np.ndarray
    seed: int
    space: LpSpec


def make_toy_problem(seed: int, m: int, n: int, space: Optional[LpSpec] = None) -> ToyProblem:
    """Random consistent system with a known minimum-norm solution.

    ``A`` and a precursor ``y*`` are uniform in ``[-1, 1]``; the solution is
    ``J*(A^T y*)`` normalized to unit ``p``-norm, where ``J*`` is the duality
    map of the dual space, and ``y = A x_true``.
    """
    if m < 1 or n < 1:
        raise ValueError("m and n must be positive")
    if space is None:
        space = LpSpec(n, 2.0)
    if space.dim != n:
        raise ValueError(f"space has dim {space.dim}, expected {n}")
    rng = np.random.default_rng(seed)
    A = rng.uniform(-1.0, 1.0, size=(m, n))
    y_star = rng.uniform(-1.0, 1.0, size=m)
    u = A.T @ y_star
    if not np.any(u):
        raise ValueError(f"seed {seed}: A^T y* vanished, choose another seed")
    x = space.dual().J(u)
    x /= lp_norm(x, space.p)
    op = DenseOperator(A)
    return ToyProblem(op, PrimalVector(x, space), op.apply(x), int(seed), space)


def cg_normal_polak_ribiere(A, y, x0=None, tol: float = 0.0, max_iter: int = 100, kind: str = "second") -> List[np.ndarray]:
    """Polak-Ribiere nonlinear CG with exact line search on a normal equation.

    ``kind="second"`` minimizes ``phi(u) = ||A^T u||^2 / 2 - <y, u>``, i.e.
    CG on ``A A^T u = y`` with ``x = A^T u``; ``kind="first"`` minimizes
    ``||A x - y||^2 / 2``, i.e. CG on ``A^T A x = A^T y``. On a quadratic the
    Polak-Ribiere coefficient coincides with the Fletcher-Reeves one.

    Returns the list of primal iterates ``x_0, x_1, ...``; iteration stops
    once the gradient norm is at most ``tol`` or after ``max_iter`` steps.
    """
    y = np.asarray(y, dtype=float)
    if kind not in ("first", "second"):
        raise ValueError("kind must be 'first' or 'second'")
    if x0 is not None and np.any(x0):
        raise ValueError("the reference iteration starts at zero")
    if kind == "second":
        z = np.zeros(A.rows)
        quad = lambda v: A.apply_adjoint(v)  # noqa: E731 - phi = |quad(v)|^2/2 - <b, v>
        grad_of = lambda v: A.apply(A.apply_adjoint(v)) - y  # noqa: E731
        primal = A.apply_adjoint
    else:
        z = np.zeros(A.cols)
        quad = A.apply
        grad_of = lambda v: A.apply_adjoint(A.apply(v) - y)  # noqa: E731
        primal = lambda v: v  # noqa: E731
    history = [primal(z)]
    g = grad_of(z)
    d = -g
    for _ in range(max_iter):
        gg = float(g @ g)
        if math.sqrt(gg) <= tol or gg == 0.0:
            break
        Bd = quad(d)
        step = -float(g @ d) / float(Bd @ Bd)
        z = z + step * d
        history.append(primal(z))
        g_new = grad_of(z)
        beta = float(g_new @ (g_new - g)) / gg
        d = -g_new + beta * d
        g = g_new
    return history


@dataclass
class RunRecord:
    p: float
    N: int
    mode: str
    seed: int
    iterations: int
    wall_ms: float
    failed: bool
    stop_reason: str
    history: list = field(default_factory=list, repr=False)


@dataclass(frozen=True)
class CellStats:
    p: float
    N: int
    mode: str
    seed_count: int
    mean_iters: float
    std_iters: float
    mean_ms: float
    failures: int


@dataclass
class GridStats:
    cells: List[CellStats]
    runs: List[RunRecord]

    def cell(self, p, N, mode) -> CellStats:
        mode = Mode.parse(mode).value
        for c in self.cells:
            if math.isclose(c.p, p) and c.N == N and c.mode == mode:
                return c
        raise KeyError((p, N, mode))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(STATS_COLUMNS)
            for c in self.cells:
                w.writerow([repr(c.p), c.N, c.mode, c.seed_count, repr(c.mean_iters), repr(c.std_iters), repr(c.mean_ms), c.failures])


def aggregate(runs: Sequence[RunRecord]) -> List[CellStats]:
    """Per-cell statistics; runs that hit ``max_iter`` only count as failures.

    The standard deviation is the population one (``ddof=0``); a cell whose
    runs all failed reports NaN means.
    """
    groups: Dict[tuple, List[RunRecord]] = {}
    for r in sorted(runs, key=lambda r: (r.p, r.N, r.mode, r.seed)):
        groups.setdefault((r.p, r.N, r.mode), []).append(r)
    cells = []
    for (p, N, mode), rs in groups.items():
        ok = [r for r in rs if not r.failed]
        its = np.array([r.iterations for r in ok], dtype=float)
        ms = np.array([r.wall_ms for r in ok], dtype=float)
        cells.append(
            CellStats(
                p, N, mode, len(rs),
                float(its.mean()) if ok else float("nan"),
                float(its.std()) if ok else float("nan"),
                float(ms.mean()) if ok else float("nan"),
                len(rs) - len(ok),
            )
        )
    return cells


def _history_rows(res: SolveResult):
    return [
        (rec.n, rec.residual, rec.relative_residual, rec.bregman_to_reference, rec.error_norm, rec.wall_ms)
        for rec in res.records
    ]


def _run_one(job):
    p, N, mode, seed, m, n, template, power = job
    space = LpSpec(n, p, power)
    prob = make_toy_problem(seed, m, n, space)
    cfg = SolverConfig(space=space, N=N, mode=mode, **template)
    try:
        res = solve(prob.A, prob.y, config=cfg, reference=prob.x_true)
    except SolverError as exc:
        log.warning("p=%g N=%d %s seed %d failed: %s", p, N, mode, seed, exc)
        return RunRecord(p, N, Mode.parse(mode).value, seed, -1, float("nan"), True, "error")
    return RunRecord(
        p, N, Mode.parse(mode).value, seed, res.iterations, res.records[-1].wall_ms,
        res.stop_reason == "max_iter", res.stop_reason, _history_rows(res),
    )


def run_grid(
    ps: Sequence[float],
    Ns: Sequence[int],
    modes: Sequence,
    seeds: Sequence[int],
    m: int = 100,
    n: int = 500,
    template: Optional[dict] = None,
    power: Optional[float] = None,
    workers: int = 1,
) -> GridStats:
    """Solve every ``(p, N, mode, seed)`` combination and aggregate.

    ``template`` holds the remaining :class:`SolverConfig` keyword arguments
    (``max_iter``, ``residual_tol``, ...). ``power=None`` uses ``max(p, 2)``.
    With ``workers > 1`` runs are spread over processes; results are joined
    by sorted key, so the outcome does not depend on scheduling.
    """
    if not (ps and Ns and modes and seeds):
        raise ValueError("every grid axis needs at least one value")
    template = dict(template or {})
    for k in ("space", "N", "mode"):
        template.pop(k, None)
    jobs = [
        (float(p), int(N), Mode.parse(mode).value, int(s), m, n, template, power)
        for p in ps for N in Ns for mode in modes for s in seeds
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            runs = list(ex.map(_run_one, jobs))
    else:
        runs = [_run_one(j) for j in jobs]
    runs.sort(key=lambda r: (r.p, r.N, r.mode, r.seed))
    return GridStats(aggregate(runs), runs)


def write_history(path, rows) -> None:
    """History CSV; ``rows`` are tuples in :data:`HISTORY_COLUMNS` order or a SolveResult."""
    if isinstance(rows, SolveResult):
        rows = _history_rows(rows)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_COLUMNS)
        for row in rows:
            w.writerow(["" if v is None else (v if isinstance(v, int) else repr(float(v))) for v in row])
