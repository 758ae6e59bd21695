"""Two-dimensional parallel-beam tomography on the unit square.

The image lives on ``[0, 1]^2`` discretized into ``n x n`` square pixels of
side ``h = 1/n``; pixel ``(k, l)`` (``k`` along x, ``l`` along y) is column
``j = l * n + k``. Ray ``i = angle_index * s + shift_index`` has unit normal
``(cos theta, sin theta)`` and passes at signed distance ``t`` from the
image centre ``(1/2, 1/2)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, cg

from .linop import SparseOperator
from .lp import LpSpec, PrimalVector

__all__ = [
    "RadonGeometry",
    "Ellipse",
    "SHEPP_LOGAN",
    "shepp_logan_ellipses",
    "build_radon_matrix",
    "ray_parameters",
    "chord_length",
    "shepp_logan",
    "rasterize",
    "analytic_sinogram",
    "RangeProjection",
    "project_to_range",
    "add_noise",
    "write_pgm",
    "write_csv",
    "image_from_vector",
]

log = logging.getLogger(__name__)

CENTER = 0.5
DIAGONAL = math.sqrt(2.0)


@dataclass(frozen=True)
class RadonGeometry:
    """``num_pixels`` per side, ``num_shifts`` detector bins, ``num_angles`` directions.

    ``detector_width`` is the length of the detector, centred on the image
    centre. The default 1 spans the image width; ``sqrt(2)`` spans the
    diagonal, so that every ray meeting the square is sampled.
    """

    num_pixels: int
    num_shifts: int
    num_angles: int
    detector_width: float = 1.0

    def __post_init__(self):
        for name in ("num_pixels", "num_shifts", "num_angles"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
            object.__setattr__(self, name, int(v))
        if not (0 < self.detector_width < math.inf):
            raise ValueError("detector_width must be positive")
        object.__setattr__(self, "detector_width", float(self.detector_width))

    @property
    def rows(self) -> int:
        return self.num_shifts * self.num_angles

    @property
    def cols(self) -> int:
        return self.num_pixels**2

    def angles(self) -> np.ndarray:
        """Uniform in ``[0, pi)``."""
        return np.pi * np.arange(self.num_angles) / self.num_angles

    def shifts(self) -> np.ndarray:
        """Bin centres of ``num_shifts`` equal bins covering the detector."""
        half = 0.5 * self.detector_width
        width = self.detector_width / self.num_shifts
        return -half + (np.arange(self.num_shifts) + 0.5) * width


@dataclass(frozen=True)
class Ellipse:
    """Ellipse with centre ``(cx, cy)``, semi-axes ``(a, b)`` before rotating
    counter-clockwise by ``rotation`` radians, and additive ``intensity``."""

    cx: float
    cy: float
    a: float
    b: float
    rotation: float = 0.0
    intensity: float = 1.0

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError("semi-axes must be positive")

    def contains(self, x, y) -> np.ndarray:
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        dx = np.asarray(x, dtype=float) - self.cx
        dy = np.asarray(y, dtype=float) - self.cy
        u = c * dx + s * dy
        v = -s * dx + c * dy
        return (u / self.a) ** 2 + (v / self.b) ** 2 <= 1.0


# Shepp & Logan (1974), original high-contrast intensities, on [-1, 1]^2:
# (x0, y0, semi-axis a, semi-axis b, rotation in degrees, intensity)
SHEPP_LOGAN = (
    (0.0, 0.0, 0.69, 0.92, 0.0, 2.0),
    (0.0, -0.0184, 0.6624, 0.874, 0.0, -0.98),
    (0.22, 0.0, 0.11, 0.31, -18.0, -0.02),
    (-0.22, 0.0, 0.16, 0.41, 18.0, -0.02),
    (0.0, 0.35, 0.21, 0.25, 0.0, 0.01),
    (0.0, 0.1, 0.046, 0.046, 0.0, 0.01),
    (0.0, -0.1, 0.046, 0.046, 0.0, 0.01),
    (-0.08, -0.605, 0.046, 0.023, 0.0, 0.01),
    (0.0, -0.605, 0.023, 0.023, 0.0, 0.01),
    (0.06, -0.605, 0.023, 0.046, 0.0, 0.01),
)


def shepp_logan_ellipses() -> list:
    """The phantom table mapped from ``[-1, 1]^2`` into ``[0, 1]^2``."""
    return [
        Ellipse(0.5 + 0.5 * x0, 0.5 + 0.5 * y0, 0.5 * a, 0.5 * b, math.radians(deg), rho)
        for x0, y0, a, b, deg, rho in SHEPP_LOGAN
    ]


def ray_parameters(geom: RadonGeometry):
    """Per-row ``(theta, t)`` arrays in angle-major order."""
    theta = np.repeat(geom.angles(), geom.num_shifts)
    t = np.tile(geom.shifts(), geom.num_angles)
    return theta, t


def chord_length(theta: float, t: float) -> float:
    """Length of the ray ``(theta, t)`` inside the unit square (slab clipping)."""
    lo, hi = _clip(theta, t)
    return max(hi - lo, 0.0)


def _clip(theta, t):
    n = np.array([math.cos(theta), math.sin(theta)])
    d = np.array([-n[1], n[0]])
    p0 = CENTER + t * n
    lo, hi = -np.inf, np.inf
    for ax in range(2):
        if abs(d[ax]) < 1e-15:
            if not (0.0 <= p0[ax] <= 1.0):
                return 0.0, 0.0
            continue
        a0 = (0.0 - p0[ax]) / d[ax]
        a1 = (1.0 - p0[ax]) / d[ax]
        lo = max(lo, min(a0, a1))
        hi = min(hi, max(a0, a1))
    if hi <= lo:
        return 0.0, 0.0
    return lo, hi


def _trace(theta, t, n):
    """Pixel indices and intersection lengths of one ray, by stepping through
    the sorted crossing points with the grid lines."""
    lo, hi = _clip(theta, t)
    if hi <= lo:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    nx, ny = math.cos(theta), math.sin(theta)
    dx, dy = -ny, nx
    px, py = CENTER + t * nx, CENTER + t * ny
    grid = np.arange(n + 1) / n
    crossings = [np.array([lo, hi])]
    if abs(dx) >= 1e-15:
        crossings.append((grid - px) / dx)
    if abs(dy) >= 1e-15:
        crossings.append((grid - py) / dy)
    alpha = np.concatenate(crossings)
    alpha = np.unique(alpha[(alpha >= lo) & (alpha <= hi)])
    seg = np.diff(alpha)
    keep = seg > 1e-14
    seg = seg[keep]
    mid = 0.5 * (alpha[:-1] + alpha[1:])[keep]
    k = np.clip(np.floor((px + mid * dx) * n).astype(np.int64), 0, n - 1)
    l = np.clip(np.floor((py + mid * dy) * n).astype(np.int64), 0, n - 1)
    return l * n + k, seg


def build_radon_matrix(geom: RadonGeometry) -> SparseOperator:
    """Sparse matrix of ray/pixel intersection lengths."""
    n = geom.num_pixels
    theta, t = ray_parameters(geom)
    indptr = [0]
    cols, vals = [], []
    for th, tt in zip(theta, t):
        j, seg = _trace(th, tt, n)
        order = np.argsort(j, kind="stable")
        cols.append(j[order])
        vals.append(seg[order])
        indptr.append(indptr[-1] + j.size)
    m = sp.csr_matrix(
        (np.concatenate(vals) if vals else np.zeros(0),
         np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64),
         np.asarray(indptr)),
        shape=(geom.rows, geom.cols),
    )
    return SparseOperator(m)


def rasterize(ellipses: Iterable[Ellipse], n: int) -> np.ndarray:
    """Sum of ellipse intensities sampled at pixel centres, as a length ``n^2`` vector."""
    if n < 1:
        raise ValueError("n must be positive")
    c = (np.arange(n) + 0.5) / n
    X, Y = np.meshgrid(c, c)  # Y[l, k] = c[l], X[l, k] = c[k]
    img = np.zeros((n, n))
    for e in ellipses:
        img += e.intensity * e.contains(X, Y)
    return img.reshape(-1)


def shepp_logan(n: int) -> PrimalVector:
    """Shepp-Logan phantom on an ``n x n`` grid, vectorized with ``j = l n + k``."""
    return PrimalVector(rasterize(shepp_logan_ellipses(), n), LpSpec(n * n, 2.0))


def analytic_sinogram(ellipses: Sequence[Ellipse], geom: RadonGeometry) -> np.ndarray:
    """Exact line integrals of a sum of ellipses along every ray."""
    theta, t = ray_parameters(geom)
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    out = np.zeros(geom.rows)
    for e in ellipses:
        # offset of the ray from the ellipse centre, measured along the normal
        tp = t + (CENTER - e.cx) * cos_t + (CENTER - e.cy) * sin_t
        phi = theta - e.rotation
        a2 = (e.a * np.cos(phi)) ** 2 + (e.b * np.sin(phi)) ** 2
        inside = tp * tp < a2
        val = np.zeros_like(out)
        val[inside] = 2.0 * e.intensity * e.a * e.b * np.sqrt(a2[inside] - tp[inside] ** 2) / a2[inside]
        out += val
    return out


class RangeProjection(NamedTuple):
    data: np.ndarray
    iterations: int
    converged: bool


def project_to_range(A, y, tol: float = 1e-10, max_iter: int = 10000) -> RangeProjection:
    """Orthogonal projection of ``y`` onto the range of ``A``.

    Solves the normal equation ``A^T A x = A^T y`` by conjugate gradients
    until ``||A^T (y - A x)|| <= tol`` and returns ``A x``. ``converged`` is
    False when ``max_iter`` ran out first.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    y = np.asarray(y, dtype=float)
    normal = LinearOperator(
        (A.cols, A.cols), matvec=lambda v: A.apply_adjoint(A.apply(v)), dtype=float
    )
    count = [0]

    def cb(_):
        count[0] += 1

    x, info = cg(normal, A.apply_adjoint(y), rtol=0.0, atol=tol, maxiter=max_iter, callback=cb)
    if info != 0:
        log.warning("range projection stopped after %d iterations without reaching tol", count[0])
    return RangeProjection(A.apply(x), count[0], info == 0)


def add_noise(y, delta: float, seed: int) -> np.ndarray:
    """``y + delta ||y|| / ||n|| n`` with ``n`` uniform in ``[-1, 1]`` (PCG64 seeded by ``seed``)."""
    y = np.asarray(y, dtype=float)
    if delta < 0:
        raise ValueError("delta must be non-negative")
    if delta == 0:
        return y.copy()
    ny = np.linalg.norm(y)
    if ny == 0.0:
        raise ValueError("cannot scale noise relative to zero data")
    noise = np.random.default_rng(seed).uniform(-1.0, 1.0, size=y.shape)
    return y + delta * ny / np.linalg.norm(noise) * noise


def image_from_vector(v, n: int) -> np.ndarray:
    """Reshape to ``(n, n)`` with the top row at the largest y."""
    return np.asarray(getattr(v, "values", v), dtype=float).reshape(n, n)[::-1]


def write_pgm(path, image) -> None:
    """Binary 8-bit graymap, min-max normalized (a constant image is black)."""
    img = np.asarray(image, dtype=float)
    if img.ndim != 2:
        raise ValueError("image must be 2-D")
    lo, hi = float(img.min()), float(img.max())
    scaled = np.zeros(img.shape) if hi == lo else (img - lo) / (hi - lo)
    data = np.rint(255.0 * scaled).astype(np.uint8)
    rows, cols = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def write_csv(path, array) -> None:
    """Row-major reals, comma separated, full precision."""
    a = np.atleast_2d(np.asarray(array, dtype=float))
    np.savetxt(Path(path), a, delimiter=",", fmt="%.17g")
