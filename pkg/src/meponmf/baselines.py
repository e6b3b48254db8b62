"""Plain NMF baseline (Lee-Seung multiplicative updates, Frobenius loss)."""
from __future__ import annotations

import numpy as np

from .core import DataMatrix, FactorPair, Orientation
from .datagen import make_rng

EPS = 1e-300


def mu_nmf(X, k, iters=1000, seed=0, orientation=Orientation.H_ORTHOGONAL,
           return_trace=False):
    """Factor ``X ~ W H`` with ``k`` components by multiplicative updates.

    ``orientation`` only tags which factor the metrics treat as constrained;
    no orthogonality is imposed. With ``return_trace`` the squared Frobenius
    objective after every iteration is returned too.
    """
    X = X.original() if isinstance(X, DataMatrix) else np.asarray(X, dtype=np.float64)
    if k < 1 or iters < 1:
        raise ValueError("k and iters must be >= 1")
    d, n = X.shape
    rng = make_rng(seed)
    avg = np.sqrt(X.mean() / k)
    W = avg * rng.uniform(0.0, 1.0, size=(d, k)) + EPS
    H = avg * rng.uniform(0.0, 1.0, size=(k, n)) + EPS
    trace = []
    for _ in range(iters):
        H *= (W.T @ X) / np.maximum(W.T @ W @ H, EPS)
        W *= (X @ H.T) / np.maximum(W @ (H @ H.T), EPS)
        if return_trace:
            trace.append(float(np.linalg.norm(X - W @ H) ** 2))
    pair = FactorPair(W, H, orientation)
    return (pair, trace) if return_trace else pair
