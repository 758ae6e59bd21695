"""Arithmetic in finite-dimensional lp spaces and their duals.

The solver works on plain float arrays for speed; :class:`PrimalVector` and
:class:`DualVector` wrap an array together with the :class:`LpSpec` it lives
in and are used at API boundaries where mixing the two would be a bug.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

__all__ = [
    "LpSpec",
    "PrimalVector",
    "DualVector",
    "conjugate_exponent",
    "lp_norm",
    "duality_map_array",
    "duality_map",
    "bregman_distance",
    "bregman_distance_direct",
    "xu_roach_constants",
    "modulus_smoothness_bound",
    "TAU0",
]

# Xu-Roach: tau0 = (sqrt(339) - 18) / 30
TAU0 = (math.sqrt(339.0) - 18.0) / 30.0


def conjugate_exponent(p: float) -> float:
    """Return q with 1/p + 1/q = 1."""
    p = float(p)
    if not math.isfinite(p) or p <= 1.0:
        raise ValueError(f"exponent must be a finite real > 1, got {p!r}")
    return p / (p - 1.0)


def lp_norm(v, p: float) -> float:
    """lp norm of a real vector, computed with max-abs rescaling.

    The rescaling keeps ``|v_i|**p`` away from overflow and underflow for
    large ``p`` or tiny entries.
    """
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("vector has non-finite entries")
    if v.size == 0:
        return 0.0
    scale = float(np.max(np.abs(v)))
    if scale == 0.0:
        return 0.0
    if p == 2.0:
        return scale * float(np.sqrt(np.dot(v / scale, v / scale)))
    return scale * float(np.sum(np.abs(v / scale) ** p) ** (1.0 / p))


def duality_map_array(v, p: float, power: float) -> np.ndarray:
    """Single-valued duality mapping of lp with gauge ``t -> t**(power-1)``.

    ``j_i = ||v||**(power-p) * sign(v_i) * |v_i|**(p-1)``, evaluated as
    ``||v||**(power-1) * sign(u_i) |u_i|**(p-1)`` with ``u = v / ||v||`` so
    that no intermediate over- or underflows.
    """
    v = np.asarray(v, dtype=float)
    nrm = lp_norm(v, p)
    if nrm == 0.0:
        return np.zeros_like(v)
    u = v / nrm
    if p == 2.0:
        j = u
    else:
        j = np.sign(u) * np.abs(u) ** (p - 1.0)
    if power == 2.0:
        return nrm * j
    return nrm ** (power - 1.0) * j


@dataclass(frozen=True)
class LpSpec:
    """The space lp(R^dim) together with the gauge power of its duality map.

    Parameters
    ----------
    dim : int
        Dimension.
    p : float
        Norm exponent, must lie in (1, inf).
    power : float, optional
        Gauge power of the duality mapping. Defaults to ``max(p, 2)``, the
        choice used in the random-matrix experiments.
    """

    dim: int
    p: float
    power: float = None  # type: ignore[assignment]

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim!r}")
        if not math.isfinite(self.p) or self.p <= 1.0:
            raise ValueError(f"p must lie in (1, inf), got {self.p!r}")
        if self.power is None:
            object.__setattr__(self, "power", max(float(self.p), 2.0))
        if not math.isfinite(self.power) or self.power <= 1.0:
            raise ValueError(f"power must lie in (1, inf), got {self.power!r}")
        object.__setattr__(self, "dim", int(self.dim))
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "power", float(self.power))

    def dual(self) -> "LpSpec":
        """Dual space lp* with the conjugate gauge power."""
        return LpSpec(self.dim, conjugate_exponent(self.p), conjugate_exponent(self.power))

    def is_close(self, other: "LpSpec", rtol: float = 1e-12) -> bool:
        return (
            self.dim == other.dim
            and math.isclose(self.p, other.p, rel_tol=rtol)
            and math.isclose(self.power, other.power, rel_tol=rtol)
        )

    # array-level helpers used on hot paths
    def norm(self, v) -> float:
        return lp_norm(v, self.p)

    def J(self, v) -> np.ndarray:
        return duality_map_array(v, self.p, self.power)

    def bregman(self, x, y) -> float:
        """Bregman distance of ``f = ||.||**power / power`` from x to y."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        r = self.power
        rs = conjugate_exponent(r)
        nx = lp_norm(x, self.p)
        ny = lp_norm(y, self.p)
        val = nx**r / rs - float(np.dot(self.J(x), y)) + ny**r / r
        return max(val, 0.0)


class _Tagged:
    __slots__ = ("values", "space")

    def __init__(self, values, space: LpSpec):
        values = np.array(values, dtype=float).reshape(-1)
        if values.shape[0] != space.dim:
            raise ValueError(
                f"vector of length {values.shape[0]} does not fit space of dim {space.dim}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("vector has non-finite entries")
        self.values = values
        self.space = space

    def norm(self) -> float:
        return lp_norm(self.values, self.space.p)

    def _check(self, other):
        if type(other) is not type(self):
            raise TypeError(
                f"cannot combine {type(self).__name__} with {type(other).__name__}"
            )
        if not self.space.is_close(other.space):
            raise ValueError("vectors live in different spaces")

    def __add__(self, other):
        self._check(other)
        return type(self)(self.values + other.values, self.space)

    def __sub__(self, other):
        self._check(other)
        return type(self)(self.values - other.values, self.space)

    def __mul__(self, scalar: float):
        return type(self)(float(scalar) * self.values, self.space)

    __rmul__ = __mul__

    def __neg__(self):
        return type(self)(-self.values, self.space)

    def __len__(self):
        return self.space.dim

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.space.dim}, p={self.space.p:g}, power={self.space.power:g})"


class PrimalVector(_Tagged):
    """Element of X = lp."""

    __slots__ = ()

    def pair(self, other: "DualVector") -> float:
        """Dual pairing <other, self>."""
        if not isinstance(other, DualVector):
            raise TypeError("a primal vector pairs with a dual vector")
        return float(np.dot(self.values, other.values))


class DualVector(_Tagged):
    """Element of X* = lp* (its ``space`` is the dual spec)."""

    __slots__ = ()

    def pair(self, other: PrimalVector) -> float:
        if not isinstance(other, PrimalVector):
            raise TypeError("a dual vector pairs with a primal vector")
        return float(np.dot(self.values, other.values))


def duality_map(x: Union[PrimalVector, DualVector]):
    """Apply the duality mapping of the space ``x`` lives in.

    A :class:`PrimalVector` of ``LpSpec(d, p, r)`` maps to a
    :class:`DualVector` of ``LpSpec(d, p*, r*)``. Applied to a dual vector
    the map of the dual space is used, landing back in the primal space,
    so ``duality_map(duality_map(x))`` recovers ``x``.
    """
    if not isinstance(x, (PrimalVector, DualVector)):
        raise TypeError(f"expected a PrimalVector or DualVector, got {type(x).__name__}")
    space = x.space
    j = duality_map_array(x.values, space.p, space.power)
    target = space.dual()
    if isinstance(x, PrimalVector):
        return DualVector(j, target)
    return PrimalVector(j, target)


def bregman_distance(x: PrimalVector, y: PrimalVector) -> float:
    """Bregman distance from x to y via the power identity.

    ``(1/r*) ||x||**r - <J(x), y> + (1/r) ||y||**r`` where ``r`` is the gauge
    power. Non-negative, zero exactly for ``x == y``.
    """
    x._check(y)
    return x.space.bregman(x.values, y.values)


def bregman_distance_direct(x: PrimalVector, y: PrimalVector) -> float:
    """Bregman distance from the definition ``f(y) - f(x) - <f'(x), y - x>``."""
    x._check(y)
    sp = x.space
    r = sp.power
    fx = sp.norm(x.values) ** r / r
    fy = sp.norm(y.values) ** r / r
    return fy - fx - float(np.dot(sp.J(x.values), y.values - x.values))


def xu_roach_constants(q: float):
    """Constants ``(G_q, K_q, c)`` of the Xu-Roach smoothness inequality.

    ``K_q`` is ``4 (2 + sqrt 3)`` times a four-way minimum involving ``q``
    and its conjugate, ``G_q = max(8, 64 c / K_q)`` and ``c`` is a product
    that is truncated once a factor is within 1e-15 of one.
    """
    q = float(q)
    qc = conjugate_exponent(q)
    s3 = math.sqrt(3.0)
    terms = (
        min(0.5 * q * (q - 1.0), 1.0),
        min(0.5 * q, 1.0) * (q - 1.0),
        (q - 1.0) * (1.0 - (s3 - 1.0) ** qc),
        1.0 - (1.0 + (2.0 - s3) * qc) ** (1.0 - q),
    )
    K = 4.0 * (2.0 + s3) * min(terms)

    # sqrt(1 + t^2) - 1 rewritten without cancellation
    c = 4.0 * TAU0 / (TAU0**2 / (math.sqrt(1.0 + TAU0**2) + 1.0))
    j = 1
    while True:
        factor = 1.0 + 15.0 * TAU0 / 2.0 ** (j + 2)
        if factor - 1.0 < 1e-15:
            break
        c *= factor
        j += 1
    G = max(8.0, 64.0 * c / K)
    return G, K, c


def modulus_smoothness_bound(tau: float, q: float) -> float:
    """Analytic upper bound on the modulus of smoothness of lq.

    ``tau**q / q`` for ``1 < q <= 2`` and ``(q - 1) tau**2 / 2`` for ``q >= 2``.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    if q <= 1:
        raise ValueError("q must exceed 1")
    if q <= 2.0:
        return tau**q / q
    return 0.5 * (q - 1.0) * tau**2
