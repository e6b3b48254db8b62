"""ONMF on top of the annealer: orientation, hardening, scale recovery.

The H-orthogonal problem is solved directly: columns of ``X`` are points,
annealed features become the columns of ``W`` and each column of ``H``
holds a single least-squares scale. The W-orthogonal problem is the same
computation on ``X^T`` with the factors swapped and transposed.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .core import (
    DataMatrix,
    FactorPair,
    Orientation,
    SolverConfig,
    TransitionLog,
    Variant,
    normalize_columns,
)
from .engine import AnnealResult, anneal, capacity_residuals, stage_capacities
from .errors import DegenerateFeature
from .metrics import MetricsReport, evaluate


@dataclass
class OnmfResult:
    factors: FactorPair
    transitions: TransitionLog
    metrics: MetricsReport
    elapsed_seconds: float
    run: AnnealResult
    k_distinct: int
    capacity_residuals: list | None = None

    @property
    def W(self):
        return self.factors.W

    @property
    def H(self):
        return self.factors.H


def harden_assignments(assoc) -> np.ndarray:
    """One-hot argmax per column; ties go to the lowest feature index."""
    assoc = np.asarray(assoc)
    hard = np.zeros(assoc.shape)
    hard[np.argmax(assoc, axis=0), np.arange(assoc.shape[1])] = 1.0
    return hard


def post_process_theta(X, W, hard) -> np.ndarray:
    """Replace each one-hot entry with the least-squares scale ``x^T w / ||w||^2``.

    ``X`` should be the unnormalized data; a :class:`DataMatrix` is
    converted back to its original columns first.
    """
    X = X.original() if isinstance(X, DataMatrix) else np.asarray(X, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    hard = np.asarray(hard)
    n = X.shape[1]
    if np.any(np.count_nonzero(hard, axis=0) != 1):
        raise ValueError("every column of the hard assignment needs exactly one nonzero")
    j = np.argmax(hard, axis=0)
    w = W[:, j]
    nn = np.einsum("ij,ij->j", w, w)
    if np.any(nn == 0):
        raise DegenerateFeature(np.unique(j[nn == 0]), "assigned feature has zero norm")
    theta = np.einsum("ij,ij->j", X, w) / nn
    H = np.zeros((W.shape[1], n))
    H[j, np.arange(n)] = theta
    return H


def _fit_h(X: DataMatrix, cfg: SolverConfig):
    Xn = normalize_columns(X)
    run = anneal(Xn.values, Xn.weights, cfg)
    state = run.state
    hard = harden_assignments(state.assoc)
    H = post_process_theta(X.original(), state.features, hard)
    W = state.features
    resid = None
    if cfg.variant is Variant.CAPACITY_CONSTRAINED:
        caps = stage_capacities(cfg.capacities, state.k)
        resid = capacity_residuals(Xn.weights, state.assoc, caps).tolist()
    pad = cfg.k_max - state.k
    if pad > 0:
        # unused feature slots stay empty so the factor rank is k_max
        W = np.hstack([W, np.zeros((W.shape[0], pad))])
        H = np.vstack([H, np.zeros((pad, H.shape[1]))])
    return W, H, run, resid


def fit(X: DataMatrix, cfg: SolverConfig) -> OnmfResult:
    """Orthogonal NMF of ``X`` with ``cfg.k_max`` features.

    The constrained factor has exactly one nonzero per data point (H
    orthogonal) or per row of ``X`` (W orthogonal). Metrics are computed
    against the original, unnormalized ``X``.
    """
    t0 = time.perf_counter()
    if cfg.orientation is Orientation.W_ORTHOGONAL:
        Wt, Ht, run, resid = _fit_h(DataMatrix.from_array(X.original().T), cfg)
        W, H = Ht.T, Wt.T
    else:
        W, H, run, resid = _fit_h(X, cfg)
    factors = FactorPair(W, H, cfg.orientation)
    elapsed = time.perf_counter() - t0
    metrics = evaluate(X.original(), factors, elapsed)
    return OnmfResult(factors, run.transitions, metrics, elapsed, run, run.state.k, resid)
