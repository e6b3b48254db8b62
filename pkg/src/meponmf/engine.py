"""Deterministic annealing over feature locations.

Data points are the columns of a ``d x n`` array ``X`` with weights ``p``.
Features are the columns of a ``d x k`` array. Feature weights are carried
in log form because the capacity fixed point drives their ratios to
``exp(beta * distance gap)``, which overflows long before ``beta_max``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .core import SolverConfig, TransitionLog, Variant
from .errors import (
    CapacityReached,
    DegenerateFeature,
    EigenFailure,
    FixedPointDivergence,
    NumericalError,
    ScheduleError,
)

log = logging.getLogger(__name__)

MASS_FLOOR = 1e-300
REINIT_WEIGHT = 1e-6
FP_RELATIVE_TOL = 1e-10
FP_RESIDUAL_TOL = 1e-8
FP_MAX_ITERS = 10_000
FP_MAP_ITERS = 5
FP_POLISH_TOL = 1e-12
ZERO_COVARIANCE = 1e-14


@dataclass(frozen=True, eq=False)
class AnnealerState:
    features: np.ndarray  # d x k
    log_alphas: np.ndarray  # k, normalized so that sum(exp) == 1
    assoc: np.ndarray  # k x n, columns sum to one
    beta: float

    @property
    def k(self) -> int:
        return self.features.shape[1]

    @property
    def alphas(self) -> np.ndarray:
        return np.exp(self.log_alphas)


@dataclass
class InnerLoopReport:
    beta: float
    iterations: int
    final_free_energy: float
    free_energy_trace: list
    converged: bool
    capacity_residual: float | None = None
    reinitialized: list = field(default_factory=list)


@dataclass(frozen=True)
class SplitEvent:
    parent_index: int
    beta_at_split: float
    new_k: int


@dataclass
class AnnealResult:
    state: AnnealerState
    transitions: TransitionLog
    reports: list
    splits: list
    beta_init: float
    beta_max: float


def _normalize_log(la):
    return la - _lse(la, axis=0)


def initial_state(X, p, k=1, beta=0.0) -> AnnealerState:
    """All ``k`` features at the weighted centroid with equal weights."""
    centroid = X @ p
    W = np.repeat(centroid[:, None], k, axis=1)
    n = X.shape[1]
    return AnnealerState(W, np.full(k, -np.log(k)), np.full((k, n), 1.0 / k), float(beta))


def sq_distances(X, W) -> np.ndarray:
    """``k x n`` matrix of squared Euclidean distances ``||x_i - w_j||^2``.

    Uses the norm expansion, so callers keep coordinates centred near the
    data (``anneal`` shifts by the centroid) to limit cancellation.
    """
    xx = np.einsum("ij,ij->j", X, X)
    ww = np.einsum("ij,ij->j", W, W)
    D = ww[:, None] + xx[None, :] - 2.0 * (W.T @ X)
    return np.maximum(D, 0.0, out=D)


def _lse(a, axis=0):
    m = a.max(axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    return np.log(np.exp(a - m).sum(axis=axis)) + np.squeeze(m, axis=axis)


def _logits(D, log_alphas, beta):
    return log_alphas[:, None] - beta * D


def _partition(D, log_alphas, beta):
    # (associations, per-column log normalizer) from one exponentiation
    logits = _logits(D, log_alphas, beta)
    m = logits.max(axis=0)
    E = np.exp(logits - m)
    Z = E.sum(axis=0)
    return E / Z, np.log(Z) + m


def gibbs_update(X, state: AnnealerState, D=None) -> np.ndarray:
    """Soft associations ``p(j|i)`` proportional to ``alpha_j exp(-beta d_ij)``.

    Evaluated with a per-column max shift, so it is safe at any ``beta``.
    """
    if D is None:
        D = sq_distances(X, state.features)
    logits = _logits(D, state.log_alphas, state.beta)
    logits -= logits.max(axis=0)
    E = np.exp(logits)
    Z = E.sum(axis=0)
    if not np.all(Z >= 1.0):  # the max entry contributes exactly one
        raise NumericalError("Gibbs normalizer vanished")
    return E / Z


def feature_update(X, p, assoc):
    """Centroid step: ``alpha_j = sum_i p_i p(j|i)`` and ``w_j`` its posterior mean.

    Raises :class:`DegenerateFeature` listing every feature whose mass fell
    below ``1e-300``.
    """
    mass = assoc * p
    alphas = mass.sum(axis=1)
    dead = np.flatnonzero(alphas < MASS_FLOOR)
    if dead.size:
        raise DegenerateFeature(dead)
    W = (X @ mass.T) / alphas
    return W, alphas / alphas.sum()


def capacity_residuals(p, assoc, capacities) -> np.ndarray:
    return np.abs(assoc @ p - np.asarray(capacities))


def alpha_fixed_point(X, p, state: AnnealerState, capacities, D=None,
                      max_iters=FP_MAX_ITERS) -> np.ndarray:
    """Feature weights that make every feature carry its prescribed mass.

    Iterates ``alpha_j <- c_j / sum_i p_i exp(-beta d_ij) / Z_i`` in log
    space, warm-started from ``state.log_alphas``. The map contracts ever
    more slowly as ``beta`` grows, so after ``FP_MAP_ITERS`` sweeps the
    remaining residual is removed by damped Newton steps on the convex dual
    ``sum_i p_i logsumexp_j(u_j - beta d_ij) - c.u`` whose gradient is the
    capacity residual. Returns normalized log weights.
    """
    c = np.asarray(capacities, dtype=np.float64)
    if c.shape != (state.k,):
        raise ValueError(f"{c.size} capacities for {state.k} features")
    if np.any(c <= 0):
        raise FixedPointDivergence("zero capacity has no finite feature weight")
    if D is None:
        D = sq_distances(X, state.features)
    log_c = np.log(c)
    log_p = np.log(p)
    base = -state.beta * D
    la = state.log_alphas.copy()
    for it in range(min(max_iters, FP_MAP_ITERS)):
        log_z = _lse(la[:, None] + base, axis=0)
        # log sum_i p_i e^{-beta d_ij} / Z_i
        log_s = _lse(base + (log_p - log_z), axis=1)
        new = _normalize_log(log_c - log_s)
        step = np.max(np.abs(np.expm1(new - la)))
        la = new
        if step < FP_RELATIVE_TOL and _dual(la, base, p, c)[1] < FP_RESIDUAL_TOL:
            return la
    la = _newton_polish(la, base, p, c, max_iters - FP_MAP_ITERS)
    resid = _dual(la, base, p, c)[1]
    if resid < FP_RESIDUAL_TOL:
        return la
    raise FixedPointDivergence(
        f"capacity fixed point residual {resid:.3g} at beta={state.beta:.6g}")


def _dual(u, base, p, c):
    # (dual objective, max residual, residual vector, associations)
    logits = u[:, None] + base
    log_z = _lse(logits, axis=0)
    q = np.exp(logits - log_z)
    g = q @ p - c
    return float(p @ log_z - c @ u), float(np.max(np.abs(g))), g, q


def _newton_polish(u, base, p, c, budget):
    # Newton on the dual with backtracking. A step is kept when it lowers the
    # dual (allowing for rounding) or the residual itself.
    k = u.size
    phi, resid, g, q = _dual(u, base, p, c)
    gauge = np.ones((k, k)) / k
    for _ in range(max(budget, 0)):
        if resid < FP_POLISH_TOL:
            break
        hess = np.diag(q @ p) - (q * p) @ q.T + gauge
        hess[np.diag_indices(k)] += 1e-14
        dirn = -np.linalg.solve(hess, g)
        slope = float(g @ dirn)
        t = 1.0
        for _ in range(60):
            cand = _normalize_log(u + t * dirn)
            phi_c, resid_c, g_c, q_c = _dual(cand, base, p, c)
            if resid_c < resid or phi_c <= phi + 1e-4 * t * slope + 1e-15 * abs(phi):
                break
            t *= 0.5
        else:
            break
        u, phi, resid, g, q = cand, phi_c, resid_c, g_c, q_c
    return u


def free_energy(X, p, state: AnnealerState, D=None) -> float:
    """``-(1/beta) sum_i p_i log sum_j alpha_j exp(-beta ||x_i - w_j||^2)``.

    At ``beta == 0`` the limit ``sum_i p_i sum_j alpha_j d_ij`` is returned.
    """
    if D is None:
        D = sq_distances(X, state.features)
    if state.beta == 0:
        return float(p @ (state.alphas @ D))
    log_z = _lse(_logits(D, state.log_alphas, state.beta), axis=0)
    return float(-(p @ log_z) / state.beta)


def constrained_free_energy(X, p, state: AnnealerState, capacities, D=None) -> float:
    """Free energy of the capacity-constrained problem at the optimal weights.

    Equals distortion minus entropy over ``beta`` for the Gibbs associations
    built from ``state.log_alphas``; invariant to rescaling the weights.
    """
    c = np.asarray(capacities)
    correction = float(c @ state.log_alphas) / state.beta if state.beta > 0 else 0.0
    return free_energy(X, p, state, D) + correction


def free_energy_gradient(X, p, state: AnnealerState, D=None) -> np.ndarray:
    """Gradient of :func:`free_energy` with respect to the features, ``d x k``.

    Column ``j`` is ``2 P(j) (w_j - w_j^+)`` with ``P(j)`` the feature's mass
    and ``w_j^+`` the next centroid iterate.
    """
    assoc = gibbs_update(X, state, D)
    mass = assoc * p
    P = mass.sum(axis=1)
    return 2.0 * (state.features * P - X @ mass.T)


def data_scale(X, p) -> float:
    """Root-mean-square column norm; 1 for column-normalized data."""
    return float(np.sqrt(p @ np.einsum("ij,ij->j", X, X)))


def _reinit_dead(X, p, state: AnnealerState, dead) -> AnnealerState:
    # Move each dead feature onto the currently worst-reconstructed column.
    W = state.features.copy()
    la = state.log_alphas.copy()
    for j in dead:
        keep = np.ones(W.shape[1], dtype=bool)
        keep[j] = False
        nearest = sq_distances(X, W[:, keep]).min(axis=0)
        worst = int(np.argmax(nearest))
        W[:, j] = X[:, worst]
        la[j] = np.log(REINIT_WEIGHT)
        log.debug("reinitialized feature %d at column %d (beta=%.6g)", j, worst, state.beta)
    la[np.setdiff1d(np.arange(W.shape[1]), dead)] += np.log1p(-REINIT_WEIGHT * len(dead))
    return replace(state, features=W, log_alphas=_normalize_log(la))


def inner_converge(X, p, state: AnnealerState, cfg: SolverConfig, capacities=None,
                   scale=None):
    """Alternate association and feature updates at fixed ``beta``.

    Stops once the relative free-energy change is below ``cfg.inner_tol``
    and no feature moves by more than ``cfg.inner_tol * scale``, or after
    ``cfg.inner_max_iters`` sweeps. With capacities the weights come from
    :func:`alpha_fixed_point` and the monitored quantity is
    :func:`constrained_free_energy`; otherwise :func:`free_energy`.
    """
    capacity = capacities is not None
    if scale is None:
        scale = data_scale(X, p)
    tol = cfg.inner_tol
    beta = state.beta
    reinit = []
    if capacity:
        c = np.asarray(capacities, dtype=np.float64)

    def settle(st):
        D = sq_distances(X, st.features)
        if capacity:
            st = replace(st, log_alphas=alpha_fixed_point(X, p, st, c, D))
        assoc, log_z = _partition(D, st.log_alphas, beta)
        if beta > 0:
            F = float(-(p @ log_z) / beta)
            if capacity:
                F += float(c @ st.log_alphas) / beta
        else:
            F = float(p @ (np.exp(st.log_alphas) @ D))
        return st, assoc, F

    state, assoc, F = settle(state)
    trace = [F]
    converged = False
    it = 0
    while it < cfg.inner_max_iters:
        it += 1
        try:
            W_new, alphas = feature_update(X, p, assoc)
        except DegenerateFeature as exc:
            state = _reinit_dead(X, p, state, exc.indices)
            reinit.extend(exc.indices)
            state, assoc, F = settle(state)
            trace.append(F)
            continue
        moved = float(np.max(np.abs(W_new - state.features))) if W_new.size else 0.0
        la = state.log_alphas if capacity else np.log(alphas)
        state, assoc, F_new = settle(replace(state, features=W_new, log_alphas=la))
        if not np.isfinite(F_new):
            raise ScheduleError(f"free energy became {F_new} at beta={beta:.6g}")
        trace.append(F_new)
        change = abs(F - F_new)
        F = F_new
        if change <= tol * abs(F) and moved <= tol * scale:
            converged = True
            break
    state = replace(state, assoc=assoc)
    resid = float(capacity_residuals(p, assoc, c).max()) if capacity else None
    report = InnerLoopReport(beta, it, F, trace, converged, resid, reinit)
    return state, report


def transition_candidates(X, p, state: AnnealerState):
    """``(j, lambda_max, direction)`` for every feature past its critical temperature.

    Feature ``j`` is unstable when ``2 beta lambda_max(C_j) >= 1`` where
    ``C_j`` is the posterior-weighted covariance of the data around ``w_j``.
    """
    out = []
    mass = state.assoc * p
    P = mass.sum(axis=1)
    for j in range(state.k):
        if P[j] <= 0:
            continue
        q = mass[j] / P[j]
        A = (X - state.features[:, j : j + 1]) * np.sqrt(q)
        lam, u = _principal(A)
        if lam > 0 and 2.0 * state.beta * lam >= 1.0:
            out.append((j, lam, u))
    return out


def _principal(A):
    # Top eigenpair of A A^T through whichever Gram matrix is smaller.
    d, n = A.shape
    try:
        if d <= n:
            vals, vecs = np.linalg.eigh(A @ A.T)
            lam, u = vals[-1], vecs[:, -1]
        else:
            vals, vecs = np.linalg.eigh(A.T @ A)
            lam = vals[-1]
            u = A @ vecs[:, -1]
            nu = np.linalg.norm(u)
            u = u / nu if nu > 0 else np.zeros(d)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(str(exc)) from exc
    if not np.isfinite(lam):
        raise EigenFailure("non-finite eigenvalue")
    i = int(np.argmax(np.abs(u)))
    if u[i] < 0:
        u = -u
    return float(max(lam, 0.0)), u


def detect_phase_transition(X, p, state: AnnealerState) -> list:
    """Indices of features whose critical temperature has been crossed."""
    return [j for j, _, _ in transition_candidates(X, p, state)]


def covariance_lambda_max(X, p) -> float:
    """Largest eigenvalue of the weighted data covariance."""
    A = (X - (X @ p)[:, None]) * np.sqrt(p)
    return _principal(A)[0]


def _random_direction(d, seed, counter):
    rng = np.random.Generator(np.random.Philox(key=seed, counter=counter))
    u = rng.standard_normal(d)
    return u / np.linalg.norm(u)


def split_feature(state: AnnealerState, t: int, delta: float, seed: int = 0,
                  direction=None, k_max=None, counter: int = 0):
    """Duplicate feature ``t`` at distance ``delta`` and halve its weight.

    The new feature sits at ``w_t + delta * u``; ``u`` defaults to a seeded
    random unit vector. Returns ``(new_state, SplitEvent)``.
    """
    if k_max is not None and state.k >= k_max:
        raise CapacityReached(f"already at k_max={k_max}")
    d = state.features.shape[0]
    u = _random_direction(d, seed, counter) if direction is None else np.asarray(direction, float)
    u = u / np.linalg.norm(u)
    W = np.concatenate([state.features, (state.features[:, t] + delta * u)[:, None]], axis=1)
    la = np.append(state.log_alphas, state.log_alphas[t] - np.log(2.0))
    la[t] -= np.log(2.0)
    half = state.assoc[t] / 2.0
    assoc = np.vstack([state.assoc, half])
    assoc[t] = half
    new = AnnealerState(W, la, assoc, state.beta)
    return new, SplitEvent(t, state.beta, new.k)


def stage_capacities(capacities, k):
    """First ``k`` capacities renormalized to sum to one."""
    c = np.asarray(capacities[:k], dtype=np.float64)
    return c / c.sum()


def resolve_schedule(X, p, cfg: SolverConfig, scale=None):
    """``(beta_init, beta_max)``, filling in data-driven defaults.

    The default start is a tenth of the first critical temperature
    ``1 / (2 lambda_max(Cov X))``; data with no spread start at 1.
    """
    if scale is None:
        scale = data_scale(X, p)
    beta_init = cfg.beta_init
    if beta_init is None:
        lam = covariance_lambda_max(X, p)
        beta_init = 0.1 / (2.0 * lam) if lam > ZERO_COVARIANCE * scale**2 else 1.0
    beta_max = cfg.beta_max if cfg.beta_max is not None else 1e6 * beta_init
    if not beta_max > beta_init:
        raise ScheduleError(f"beta_max={beta_max} does not exceed beta_init={beta_init}")
    return float(beta_init), float(beta_max)


def anneal(X, p, cfg: SolverConfig) -> AnnealResult:
    """Grow features hierarchically from the centroid while ``beta`` rises geometrically.

    At every temperature the inner loop is run to convergence; while fewer
    than ``cfg.k_max`` features exist, every unstable feature is split along
    its principal direction. No split is made at the last scheduled
    temperature, so the returned state is the output of a full inner loop.
    Inner loops right after a split can hit ``cfg.inner_max_iters``; their
    reports carry ``converged=False``.
    """
    X_orig = np.asarray(X, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    # DA is translation-equivariant; work around the centroid for accuracy
    shift = X_orig @ p
    X = X_orig - shift[:, None]
    scale = data_scale(X_orig, p)
    beta_init, beta_max = resolve_schedule(X, p, cfg, scale)
    delta = cfg.perturb_delta * scale
    capacity = cfg.variant is Variant.CAPACITY_CONSTRAINED

    state = replace(initial_state(X, p), beta=beta_init)
    transitions = TransitionLog()
    reports, splits = [], []
    beta = beta_init
    while beta <= beta_max:
        if capacity:
            # capacity duals scale like beta; rescaling keeps the warm start close
            state = replace(state, log_alphas=_normalize_log(state.log_alphas * (beta / state.beta)))
        state = replace(state, beta=beta)
        caps = stage_capacities(cfg.capacities, state.k) if capacity else None
        state, report = inner_converge(X, p, state, cfg, caps, scale)
        reports.append(report)
        if state.k < cfg.k_max and beta * cfg.gamma <= beta_max:
            for j, lam, u in transition_candidates(X, p, state):
                if state.k >= cfg.k_max:
                    break
                if lam <= ZERO_COVARIANCE * scale**2:
                    u = None
                state, event = split_feature(state, j, delta, cfg.seed, u,
                                             cfg.k_max, counter=len(splits))
                splits.append(event)
                transitions.record(state.k, beta)
                log.debug("split feature %d at beta=%.6g -> k=%d", j, beta, state.k)
        beta *= cfg.gamma
    # exact convex combinations of the original columns
    mass = state.assoc * p
    W = (X_orig @ mass.T) / mass.sum(axis=1)
    state = replace(state, features=W)
    return AnnealResult(state, transitions, reports, splits, beta_init, beta_max)
