"""Storage and orthogonalization of the truncated search space.

Directions live in X* and are kept oldest first. Each has a precursor in
Y* (``direction == A^T precursor``) and a hyperplane offset
``<precursor, y>``.
"""

from __future__ import annotations

import enum
from typing import Optional

import numpy as np

from .linesearch import LineSearchConfig, minimize, orthogonalization_objective
from .lp import LpSpec, lp_norm

__all__ = ["Mode", "SearchSpaceState", "DegenerateDirectionError", "verify_semi_orthogonality"]


class Mode(str, enum.Enum):
    UNORTH = "unorth"
    METRIC = "metric"
    EXPANDING = "expanding"

    @classmethod
    def parse(cls, value) -> "Mode":
        if isinstance(value, cls):
            return value
        aliases = {
            "unorthogonalized": cls.UNORTH,
            "metric-orthogonalized": cls.METRIC,
            "orthogonalized": cls.METRIC,
        }
        v = str(value).strip().lower()
        return aliases.get(v) or cls(v)


class DegenerateDirectionError(ArithmeticError):
    """The orthogonalized direction vanished: the new descent direction lies
    (numerically) in the span of the stored ones."""


class SearchSpaceState:
    """Ring buffer of up to ``capacity`` dual search directions.

    Parameters
    ----------
    space : LpSpec
        The primal space X; directions are measured in its dual.
    capacity : int
        Maximal number of stored directions. Ignored in expanding mode.
    mode : Mode or str
        ``unorth``, ``metric`` or ``expanding``.
    """

    def __init__(self, space: LpSpec, capacity: int, mode="metric"):
        if int(capacity) < 1:
            raise ValueError("capacity must be at least 1")
        self.space = space
        self.capacity = int(capacity)
        self.mode = Mode.parse(mode)
        self.directions: list = []
        self.precursors: list = []
        self.offsets: list = []
        self.last_coefficients: Optional[np.ndarray] = None
        self._dual = space.dual()

    def __len__(self):
        return len(self.directions)

    @property
    def matrix(self) -> np.ndarray:
        """Directions stacked as rows, oldest first."""
        if not self.directions:
            return np.zeros((0, self.space.dim))
        return np.vstack(self.directions)

    @property
    def precursor_matrix(self) -> np.ndarray:
        if not self.precursors:
            return np.zeros((0, 0))
        return np.vstack(self.precursors)

    def _validate(self, d, d_pre):
        d = np.asarray(getattr(d, "values", d), dtype=float).reshape(-1)
        d_pre = np.asarray(getattr(d_pre, "values", d_pre), dtype=float).reshape(-1)
        if d.shape[0] != self.space.dim:
            raise ValueError(f"direction has length {d.shape[0]}, space has dim {self.space.dim}")
        if self.precursors and d_pre.shape[0] != self.precursors[0].shape[0]:
            raise ValueError("precursor length differs from stored precursors")
        return d, d_pre

    def _append(self, d, d_pre, offset):
        if self.mode is not Mode.EXPANDING and len(self.directions) >= self.capacity:
            del self.directions[0]
            del self.precursors[0]
            del self.offsets[0]
        self.directions.append(d)
        self.precursors.append(d_pre)
        self.offsets.append(float(offset))

    def push_unorthogonalized(self, d, d_precursor, alpha: float) -> "SearchSpaceState":
        """Append a raw descent direction, evicting the oldest when full."""
        if self.mode is Mode.METRIC:
            raise ValueError("metric-orthogonalized state needs push_orthogonalized")
        d, d_pre = self._validate(d, d_precursor)
        self._append(d, d_pre, alpha)
        return self

    def push_orthogonalized(self, d, d_precursor, alpha: float, ls: LineSearchConfig):
        """Orthogonalize ``d`` against all stored directions and append it.

        The coefficients minimize the dual-norm distance of ``d`` to the
        span of every stored direction, including the one evicted by this
        push. Precursor and offset follow the same linear combination.

        Returns
        -------
        state : SearchSpaceState
        s : ndarray
            Orthogonalization coefficients, one per previously stored direction.
        """
        if self.mode is not Mode.METRIC:
            raise ValueError("push_orthogonalized requires metric mode")
        d, d_pre = self._validate(d, d_precursor)
        k = len(self.directions)
        if k == 0:
            s = np.zeros(0)
            self._append(d, d_pre, alpha)
            self.last_coefficients = s
            return self, s

        W = self.matrix
        qs, rs = self._dual.p, self._dual.power
        # work with unit-norm directions, s = s_unit / ||w||
        scale = np.array([lp_norm(w, qs) for w in self.directions])
        problem = orthogonalization_objective(d, W / scale[:, None], self.space)
        dnorm = lp_norm(d, qs)
        # tolerance relative to the natural gradient scale r* ||d||^(r*-1)
        tol = ls.grad_tol * rs * dnorm ** (rs - 1.0)
        start = np.zeros(k)
        if self.last_coefficients is not None and self.last_coefficients.shape[0] == k:
            warm = self.last_coefficients * scale
            if problem(warm)[0] < problem(start)[0]:
                start = warm
        res = minimize(problem, LineSearchConfig(tol, ls.max_iter, start))
        s = res.t / scale

        w = d - W.T @ s
        if lp_norm(w, qs) < 1e-14 * dnorm:
            raise DegenerateDirectionError(
                "orthogonalized direction vanished; descent direction lies in the stored span"
            )
        w_pre = d_pre - self.precursor_matrix.T @ s
        beta = float(alpha) - float(np.dot(s, self.offsets))
        self._append(w, w_pre, beta)
        self.last_coefficients = s
        return self, s

    def push(self, d, d_precursor, alpha: float, ls: LineSearchConfig):
        """Mode-dispatching push; returns coefficients (empty unless metric)."""
        if self.mode is Mode.METRIC:
            return self.push_orthogonalized(d, d_precursor, alpha, ls)[1]
        self.push_unorthogonalized(d, d_precursor, alpha)
        return np.zeros(0)

    def verify_semi_orthogonality(self, tol: Optional[float] = None) -> float:
        return verify_semi_orthogonality(self, self.space, tol)


def verify_semi_orthogonality(state: SearchSpaceState, space: LpSpec, tol: Optional[float] = None) -> float:
    """Largest scaled one-sided pairing ``|<w_j, J*(w_k)>| / (||w_j|| ||w_k||^(r*-1))``
    over stored pairs ``j < k``.

    Raises ``AssertionError`` if ``tol`` is given and exceeded.
    """
    dual = space.dual()
    worst = 0.0
    dirs = state.directions
    for k in range(1, len(dirs)):
        wk = dirs[k]
        nk = lp_norm(wk, dual.p)
        if nk == 0.0:
            continue
        jk = dual.J(wk)
        scale_k = nk ** (dual.power - 1.0)
        for j in range(k):
            nj = lp_norm(dirs[j], dual.p)
            if nj == 0.0:
                continue
            worst = max(worst, abs(float(np.dot(dirs[j], jk))) / (nj * scale_k))
    if tol is not None and worst > tol:
        raise AssertionError(f"semi-orthogonality violated: {worst:.3e} > {tol:.3e}")
    return worst
