"""Sequential subspace optimization for linear inverse problems in lp spaces."""

from .linesearch import LineSearchConfig, minimize
from .linop import DenseOperator, SparseOperator, load_dense, load_sparse, norm_estimate
from .lp import (
    DualVector,
    LpSpec,
    PrimalVector,
    bregman_distance,
    conjugate_exponent,
    duality_map,
    lp_norm,
)
from .search_space import Mode, SearchSpaceState
from .solver import SolveResult, SolverConfig, SolverError, solve

__version__ = "0.1.0"

__all__ = [
    "LpSpec",
    "PrimalVector",
    "DualVector",
    "conjugate_exponent",
    "lp_norm",
    "duality_map",
    "bregman_distance",
    "DenseOperator",
    "SparseOperator",
    "load_dense",
    "load_sparse",
    "norm_estimate",
    "LineSearchConfig",
    "minimize",
    "Mode",
    "SearchSpaceState",
    "SolverConfig",
    "SolveResult",
    "SolverError",
    "solve",
]
