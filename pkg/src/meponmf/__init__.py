"""Orthogonal nonnegative matrix factorization by deterministic annealing."""
from .core import DataMatrix, FactorPair, Orientation, SolverConfig, TransitionLog, Variant, load_matrix, normalize_columns
from .facade import OnmfResult, fit
from .selection import PersistenceReport, persistence, sweep_true_k

__version__ = "0.1.0"

__all__ = [
    "DataMatrix",
    "FactorPair",
    "OnmfResult",
    "Orientation",
    "PersistenceReport",
    "SolverConfig",
    "TransitionLog",
    "Variant",
    "fit",
    "load_matrix",
    "normalize_columns",
    "persistence",
    "sweep_true_k",
]
