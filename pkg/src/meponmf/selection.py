"""Persistence of feature counts across critical temperatures.

``delta(m) = beta_cr(m + 1) / beta_cr(m)`` measures how long ``m`` distinct
features suffice as the temperature falls; the most persistent ``m`` is the
estimated true number of features.

Two indexings are in circulation. Here ``m`` is a feature count and
``beta_cr(m)`` the temperature at which the ``m``-th feature appeared. The
split-indexed convention numbers the split that takes ``s`` features to
``s + 1`` as split ``s``, so split ``s`` happens at ``beta_cr(s + 1)`` and
its log ratio is ``log delta(s + 1)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .core import DataMatrix, SolverConfig, TransitionLog
from .errors import InsufficientTransitions
from .facade import fit


@dataclass(frozen=True)
class PersistenceReport:
    deltas: list  # [(m, delta)]
    m_star: int
    log_ratios: list  # [(m, log delta)]

    def split_log_ratios(self) -> list:
        """``(split index, log ratio)`` pairs in the split-indexed convention."""
        return [(m - 1, lr) for m, lr in self.log_ratios]

    def ranked(self) -> list:
        """Feature counts sorted by decreasing persistence (ties to smaller m)."""
        return [m for m, _ in sorted(self.deltas, key=lambda t: (-t[1], t[0]))]

    def to_dict(self) -> dict:
        return {
            "deltas": [{"m": m, "delta": d} for m, d in self.deltas],
            "m_star": self.m_star,
            "log_ratios": [{"m": m, "log_ratio": lr} for m, lr in self.log_ratios],
            "split_log_ratios": [{"split": s, "log_ratio": lr} for s, lr in self.split_log_ratios()],
        }


def persistence(transitions: TransitionLog) -> PersistenceReport:
    entries = transitions.entries if isinstance(transitions, TransitionLog) else list(transitions)
    if len(entries) < 2:
        raise InsufficientTransitions(f"need at least 2 transitions, observed {len(entries)}")
    beta = dict(entries)
    deltas = [(m, beta[m + 1] / beta[m]) for m in sorted(beta) if m + 1 in beta]
    best = max(d for _, d in deltas)
    m_star = min(m for m, d in deltas if d == best)
    log_ratios = [(m, math.log(d)) for m, d in deltas]
    return PersistenceReport(deltas, m_star, log_ratios)


def critical_beta_rows(transitions: TransitionLog) -> list:
    """Rows ``(m, beta_cr, log_ratio)``; the last row has no ratio (``None``)."""
    beta = transitions.betas()
    return [(m, b, math.log(beta[m + 1] / b) if m + 1 in beta else None)
            for m, b in sorted(beta.items())]


def sweep_true_k(X: DataMatrix, cfg: SolverConfig) -> PersistenceReport:
    """Single hierarchical fit up to ``cfg.k_max``; persistence of its transitions."""
    return persistence(fit(X, cfg).transitions)
