"""Linear operators A: X -> Y with forward and adjoint application."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

__all__ = [
    "DenseOperator",
    "SparseOperator",
    "OperatorNormEstimate",
    "norm_estimate",
    "load_dense",
    "load_sparse",
]


class _Operator:
    shape: tuple

    @property
    def rows(self) -> int:
        return self.shape[0]

    @property
    def cols(self) -> int:
        return self.shape[1]

    def _check_in(self, x, n):
        x = np.asarray(getattr(x, "values", x), dtype=float)
        if x.ndim != 1 or x.shape[0] != n:
            raise ValueError(f"expected a vector of length {n}, got shape {x.shape}")
        return x

    def apply(self, x) -> np.ndarray:
        return self._apply(self._check_in(x, self.cols))

    def apply_adjoint(self, w) -> np.ndarray:
        return self._apply_adjoint(self._check_in(w, self.rows))

    def norm(self, tol: float = 1e-8, max_iter: int = 1000) -> float:
        """Cached spectral norm estimate."""
        key = (tol, max_iter)
        cache = self.__dict__.setdefault("_norm_cache", {})
        if key not in cache:
            cache[key] = norm_estimate(self, tol, max_iter).value
        return cache[key]


class DenseOperator(_Operator):
    """Operator backed by a dense row-major matrix."""

    def __init__(self, entries):
        a = np.array(entries, dtype=float)
        if a.ndim != 2:
            raise ValueError("dense operator needs a 2-D array")
        if not np.all(np.isfinite(a)):
            raise ValueError("matrix has non-finite entries")
        a.setflags(write=False)
        self.entries = a
        self.shape = a.shape

    def _apply(self, x):
        return self.entries @ x

    def _apply_adjoint(self, w):
        return self.entries.T @ w

    def todense(self) -> np.ndarray:
        return np.array(self.entries)


class SparseOperator(_Operator):
    """Operator in compressed row storage.

    Column indices are sorted and unique within each row.
    """

    def __init__(self, matrix):
        m = sp.csr_matrix(matrix, dtype=float)
        m.sum_duplicates()
        m.sort_indices()
        if not np.all(np.isfinite(m.data)):
            raise ValueError("matrix has non-finite entries")
        self.matrix = m
        self._mt = m.T.tocsr()
        self.shape = m.shape

    @classmethod
    def from_csr(cls, indptr, indices, values, shape):
        indptr = np.asarray(indptr)
        indices = np.asarray(indices)
        if np.any(np.diff(indptr) < 0):
            raise ValueError("row offsets must be non-decreasing")
        if indices.size and (indices.min() < 0 or indices.max() >= shape[1]):
            raise ValueError("column index out of range")
        for i in range(len(indptr) - 1):
            row = indices[indptr[i] : indptr[i + 1]]
            if np.any(np.diff(row) <= 0):
                raise ValueError(f"column indices of row {i} are not strictly increasing")
        return cls(sp.csr_matrix((values, indices, indptr), shape=shape))

    @property
    def indptr(self):
        return self.matrix.indptr

    @property
    def indices(self):
        return self.matrix.indices

    @property
    def values(self):
        return self.matrix.data

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def _apply(self, x):
        return self.matrix @ x

    def _apply_adjoint(self, w):
        return self._mt @ w

    def todense(self) -> np.ndarray:
        return self.matrix.toarray()


@dataclass(frozen=True)
class OperatorNormEstimate:
    value: float
    iterations: int
    tolerance: float


def norm_estimate(A, tol: float = 1e-8, max_iter: int = 1000) -> OperatorNormEstimate:
    """Spectral norm by power iteration on ``A^T A`` from the all-ones vector.

    Stops once successive estimates agree to relative tolerance ``tol``.
    A zero operator gives 0.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    v = np.ones(A.cols)
    v /= np.linalg.norm(v)
    est = 0.0
    for it in range(1, max_iter + 1):
        u = A.apply_adjoint(A.apply(v))
        nu = np.linalg.norm(u)
        if nu == 0.0:
            if it == 1:
                # all-ones may lie in the null space; retry from a fixed pseudo-random start
                v = np.random.default_rng(0).standard_normal(A.cols)
                v /= np.linalg.norm(v)
                u = A.apply_adjoint(A.apply(v))
                nu = np.linalg.norm(u)
            if nu == 0.0:
                return OperatorNormEstimate(0.0, it, tol)
        new = float(np.sqrt(nu))
        v = u / nu
        if abs(new - est) <= tol * new:
            return OperatorNormEstimate(new, it, tol)
        est = new
    return OperatorNormEstimate(est, max_iter, tol)


def load_dense(path) -> DenseOperator:
    """Read ``rows cols`` followed by row-major entries, whitespace separated."""
    tokens = Path(path).read_text().split()
    if len(tokens) < 2:
        raise ValueError(f"{path}: missing header")
    rows, cols = int(tokens[0]), int(tokens[1])
    vals = np.array([float(t) for t in tokens[2:]])
    if vals.size != rows * cols:
        raise ValueError(f"{path}: expected {rows * cols} entries, found {vals.size}")
    return DenseOperator(vals.reshape(rows, cols))


def load_sparse(path) -> SparseOperator:
    """Read coordinate format: ``rows cols nnz`` then ``row col value`` lines (0-based)."""
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty file")
    head = lines[0].split()
    if len(head) != 3:
        raise ValueError(f"{path}: header must be 'rows cols nnz'")
    rows, cols, nnz = (int(t) for t in head)
    if len(lines) - 1 != nnz:
        raise ValueError(f"{path}: header announces {nnz} entries, found {len(lines) - 1}")
    r = np.empty(nnz, dtype=np.int64)
    c = np.empty(nnz, dtype=np.int64)
    v = np.empty(nnz)
    for k, ln in enumerate(lines[1:]):
        parts = ln.split()
        if len(parts) != 3:
            raise ValueError(f"{path}: line {k + 2} is not a 'row col value' triple")
        r[k], c[k], v[k] = int(parts[0]), int(parts[1]), float(parts[2])
    if nnz and (r.min() < 0 or r.max() >= rows or c.min() < 0 or c.max() >= cols):
        raise ValueError(f"{path}: index out of range")
    return SparseOperator(sp.coo_matrix((v, (r, c)), shape=(rows, cols)))
