"""Evaluation metrics: reconstruction error, orthogonality, sparsity, time."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .core import DataMatrix, FactorPair
from .errors import DegenerateGram, ShapeMismatch

ZERO_THRESHOLD = 1e-8


def _values(X):
    return X.original() if isinstance(X, DataMatrix) else np.asarray(X, dtype=np.float64)


def recon_error(X, W, H) -> float:
    """Relative Frobenius error ``||X - WH||_F / ||X||_F``."""
    X = _values(X)
    W = np.asarray(W, dtype=np.float64)
    H = np.asarray(H, dtype=np.float64)
    if W.shape[1] != H.shape[0] or (W.shape[0], H.shape[1]) != X.shape:
        raise ShapeMismatch(f"X{X.shape} vs W{W.shape} H{H.shape}")
    return float(np.linalg.norm(X - W @ H) / np.linalg.norm(X))


def orthogonality(G) -> float:
    """``1 - ||G G^T - diag(G G^T)||_F / ||G G^T||_F`` for a feature-major ``G``."""
    G = np.asarray(G, dtype=np.float64)
    gram = G @ G.T
    total = np.linalg.norm(gram)
    if total == 0:
        raise DegenerateGram("Gram matrix of the constrained factor is zero")
    off = gram - np.diag(np.diag(gram))
    return float(1.0 - np.linalg.norm(off) / total)


def sparsity(A, n_support=None) -> float:
    """One minus the mean fraction of nonzeros per feature row of ``A``.

    ``A`` is ``k x n_support``. Entries at or below ``1e-8 * max|A|`` count
    as zero.
    """
    A = np.abs(np.asarray(A, dtype=np.float64))
    k, m = A.shape
    if n_support is None:
        n_support = m
    peak = A.max() if A.size else 0.0
    if peak == 0:
        return 1.0
    nnz = np.count_nonzero(A > ZERO_THRESHOLD * peak, axis=1)
    return float(1.0 - np.mean(nnz / n_support))


@dataclass(frozen=True)
class MetricsReport:
    recon_error_pct: float
    orthogonality_pct: float
    sparsity_pct: float
    elapsed_seconds: float = 0.0

    def __post_init__(self):
        if not (self.recon_error_pct >= 0 and 0 <= self.orthogonality_pct <= 100
                and 0 <= self.sparsity_pct <= 100 and self.elapsed_seconds >= 0):
            raise ValueError(f"metrics out of range: {self}")

    def to_dict(self) -> dict:
        return {
            "E_pct": self.recon_error_pct,
            "O_pct": self.orthogonality_pct,
            "S_pct": self.sparsity_pct,
            "T_sec": self.elapsed_seconds,
        }


def evaluate(X, factors: FactorPair, elapsed_seconds=0.0) -> MetricsReport:
    """All metrics for ``factors`` against the original data ``X``.

    Orthogonality and sparsity are measured on the factor designated as
    constrained by ``factors.orientation``.
    """
    G = factors.constrained()
    return MetricsReport(
        100.0 * recon_error(X, factors.W, factors.H),
        100.0 * orthogonality(G),
        100.0 * sparsity(G),
        float(elapsed_seconds),
    )


def timed(func, *args, reps=1, **kwargs):
    """Run ``func`` ``reps`` times; return the last result and the mean wall time."""
    if reps < 1:
        raise ValueError("reps must be >= 1")
    total = 0.0
    result = None
    for _ in range(reps):
        t0 = time.perf_counter()
        result = func(*args, **kwargs)
        total += time.perf_counter() - t0
    return result, total / reps
