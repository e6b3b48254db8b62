import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from meponmf.core import SolverConfig
from meponmf.datagen import make_rng
from meponmf.engine import (
    AnnealerState,
    alpha_fixed_point,
    anneal,
    capacity_residuals,
    covariance_lambda_max,
    detect_phase_transition,
    feature_update,
    free_energy,
    free_energy_gradient,
    gibbs_update,
    initial_state,
    inner_converge,
    resolve_schedule,
    split_feature,
    stage_capacities,
)
from meponmf.errors import CapacityReached, DegenerateFeature, FixedPointDivergence


def state(W, alphas, beta, n):
    W = np.asarray(W, dtype=float)
    k = W.shape[1]
    return AnnealerState(W, np.log(np.asarray(alphas, dtype=float)), np.full((k, n), 1.0 / k), beta)


def random_instance(seed, d=3, n=5, k=3, beta=2.0):
    rng = make_rng(seed)
    X = rng.uniform(0, 1, (d, n))
    p = rng.uniform(0.1, 1, n)
    p /= p.sum()
    W = rng.uniform(0, 1, (d, k))
    a = rng.uniform(0.1, 1, k)
    return X, p, state(W, a / a.sum(), beta, n)


# scalar-loop oracles, written directly from the defining sums

def oracle_gibbs(X, W, alphas, beta):
    d, n = X.shape
    k = W.shape[1]
    out = [[0.0] * n for _ in range(k)]
    for i in range(n):
        dist = [sum((X[r, i] - W[r, j]) ** 2 for r in range(d)) for j in range(k)]
        num = [alphas[j] * math.exp(-beta * dist[j]) for j in range(k)]
        z = sum(num)
        for j in range(k):
            out[j][i] = num[j] / z
    return np.array(out)


def oracle_features(X, p, assoc):
    d, n = X.shape
    k = assoc.shape[0]
    W = np.zeros((d, k))
    alphas = np.zeros(k)
    for j in range(k):
        mass = sum(p[i] * assoc[j, i] for i in range(n))
        alphas[j] = mass
        for r in range(d):
            W[r, j] = sum(p[i] * assoc[j, i] * X[r, i] for i in range(n)) / mass
    return W, alphas


def oracle_free_energy(X, p, W, alphas, beta):
    d, n = X.shape
    total = 0.0
    for i in range(n):
        z = sum(alphas[j] * math.exp(-beta * sum((X[r, i] - W[r, j]) ** 2 for r in range(d)))
                for j in range(W.shape[1]))
        total += p[i] * math.log(z)
    return -total / beta


class TestGibbs:
    def test_zero_beta_is_uniform(self):
        X, p, s = random_instance(0, k=4)
        s = state(s.features, [0.25] * 4, 0.0, X.shape[1])
        np.testing.assert_array_equal(gibbs_update(X, s), np.full((4, 5), 0.25))

    def test_huge_beta_is_hard(self):
        X = np.array([[0.0, 1.0]])
        s = state([[5.0, 0.1]], [0.5, 0.5], 1e6, 2)
        P = gibbs_update(X, s)
        assert abs(P[1, 0] - 1.0) < 1e-12 and P[0, 0] < 1e-12

    def test_symmetric_point(self):
        s = state([[-1.0, 1.0]], [0.5, 0.5], 1.0, 1)
        np.testing.assert_allclose(gibbs_update(np.array([[0.0]]), s)[:, 0], [0.5, 0.5], rtol=0, atol=1e-15)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_scalar_oracle(self, seed):
        X, p, s = random_instance(seed)
        np.testing.assert_allclose(gibbs_update(X, s), oracle_gibbs(X, s.features, s.alphas, s.beta),
                                   rtol=1e-12, atol=1e-15)

    @given(st.integers(0, 10_000), st.floats(1e-6, 1e6))
    def test_columns_are_stochastic(self, seed, beta):
        X, p, s = random_instance(seed, d=4, n=12, k=3, beta=beta)
        P = gibbs_update(X, s)
        assert np.all(P >= 0)
        np.testing.assert_allclose(P.sum(axis=0), 1.0, rtol=0, atol=1e-10)

    @pytest.mark.parametrize("sigma", [0.1, 3.0, 100.0])
    def test_scale_invariance(self, sigma):
        X, p, s = random_instance(11, d=4, n=20, k=3)
        scaled = AnnealerState(s.features / sigma, s.log_alphas, s.assoc, s.beta * sigma**2)
        np.testing.assert_allclose(gibbs_update(X / sigma, scaled), gibbs_update(X, s), rtol=0, atol=1e-12)


class TestFeatureUpdate:
    def test_uniform_assoc_gives_centroid(self):
        X = make_rng(1).uniform(0, 1, (3, 8))
        W, a = feature_update(X, np.full(8, 1 / 8), np.full((2, 8), 0.5))
        np.testing.assert_allclose(W, np.repeat(X.mean(axis=1, keepdims=True), 2, axis=1), atol=1e-15)
        np.testing.assert_allclose(a, [0.5, 0.5])

    def test_one_hot_gives_partition_means(self):
        X = make_rng(2).uniform(0, 1, (2, 6))
        labels = np.array([0, 1, 0, 1, 1, 0])
        assoc = np.eye(2)[labels].T
        W, _ = feature_update(X, np.full(6, 1 / 6), assoc)
        for j in range(2):
            np.testing.assert_allclose(W[:, j], X[:, labels == j].mean(axis=1), atol=1e-15)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_scalar_oracle(self, seed):
        X, p, s = random_instance(seed, d=4, n=7, k=3)
        assoc = gibbs_update(X, s)
        W, a = feature_update(X, p, assoc)
        W0, a0 = oracle_features(X, p, assoc)
        np.testing.assert_allclose(W, W0, rtol=1e-12)
        np.testing.assert_allclose(a, a0, rtol=1e-12)
        assert abs(a.sum() - 1.0) < 1e-10

    def test_dead_feature_reported(self):
        X = np.ones((2, 3))
        assoc = np.array([[1.0, 1.0, 1.0], [0.0, 0.0, 0.0]])
        with pytest.raises(DegenerateFeature) as err:
            feature_update(X, np.full(3, 1 / 3), assoc)
        assert list(err.value.indices) == [1]


class TestAlphaFixedPoint:
    def test_zero_beta_returns_capacities(self):
        X, p, s = random_instance(3, k=3, beta=0.0)
        la = alpha_fixed_point(X, p, s, [1 / 3] * 3)
        np.testing.assert_allclose(np.exp(la), [1 / 3] * 3, rtol=1e-12)
        X, p, s = random_instance(3, k=2, beta=0.0)
        np.testing.assert_allclose(np.exp(alpha_fixed_point(X, p, s, [0.7, 0.3])), [0.7, 0.3], rtol=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    @pytest.mark.parametrize("beta", [1.0, 50.0, 1e4])
    def test_meets_capacities(self, seed, beta):
        X, p, s = random_instance(seed, d=3, n=6, k=2, beta=beta)
        s = AnnealerState(s.features, s.log_alphas, s.assoc, beta)
        la = alpha_fixed_point(X, p, s, [0.5, 0.5])
        P = gibbs_update(X, AnnealerState(s.features, la, s.assoc, beta))
        assert np.max(capacity_residuals(p, P, [0.5, 0.5])) < 1e-8

    def test_zero_capacity_rejected(self):
        X, p, s = random_instance(0, k=2)
        with pytest.raises(FixedPointDivergence):
            alpha_fixed_point(X, p, s, [1.0, 0.0])

    def test_stage_capacities(self):
        np.testing.assert_allclose(stage_capacities((0.5, 0.3, 0.2), 2), [0.625, 0.375])
        np.testing.assert_allclose(stage_capacities((0.5, 0.3, 0.2), 3), [0.5, 0.3, 0.2])


class TestFreeEnergy:
    @pytest.mark.parametrize("beta", [0.01, 1.0, 100.0])
    def test_single_feature_is_weighted_distortion(self, beta):
        X, p, _ = random_instance(4, d=3, n=9)
        s = initial_state(X, p)
        s = AnnealerState(s.features, s.log_alphas, s.assoc, beta)
        expected = sum(p[i] * np.sum((X[:, i] - s.features[:, 0]) ** 2) for i in range(9))
        assert free_energy(X, p, s) == pytest.approx(expected, rel=1e-12)

    def test_coincident_points(self):
        X = np.tile([[0.3], [0.4]], 5)
        s = state([[0.3], [0.4]], [1.0], 2.0, 5)
        assert free_energy(X, np.full(5, 0.2), s) == 0.0

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_scalar_oracle(self, seed):
        X, p, s = random_instance(seed, beta=3.0)
        expected = oracle_free_energy(X, p, s.features, s.alphas, s.beta)
        assert free_energy(X, p, s) == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_gradient_matches_finite_differences(self, seed):
        X, p, s = random_instance(seed, d=3, n=10, k=3, beta=4.0)
        G = free_energy_gradient(X, p, s)
        h = 1e-6
        for r in range(3):
            for j in range(3):
                Wp, Wm = s.features.copy(), s.features.copy()
                Wp[r, j] += h
                Wm[r, j] -= h
                fp = free_energy(X, p, AnnealerState(Wp, s.log_alphas, s.assoc, s.beta))
                fm = free_energy(X, p, AnnealerState(Wm, s.log_alphas, s.assoc, s.beta))
                assert G[r, j] == pytest.approx((fp - fm) / (2 * h), rel=1e-5, abs=1e-9)


def two_clusters():
    rng = make_rng(7)
    A = np.array([[0.0], [0.0]]) + 0.05 * rng.standard_normal((2, 25))
    B = np.array([[3.0], [1.0]]) + 0.05 * rng.standard_normal((2, 25))
    return np.hstack([A, B]), np.full(50, 1 / 50), state([[0.5, 2.0], [0.5, 0.5]], [0.5, 0.5], 200.0, 50)


class TestInnerConverge:
    def test_converged_state_takes_one_sweep(self):
        X, p, s = two_clusters()
        cfg = SolverConfig(k_max=2)
        s, first = inner_converge(X, p, s, cfg)
        assert first.converged
        s, report = inner_converge(X, p, s, cfg)
        assert report.converged and report.iterations == 1

    def test_single_feature_goes_to_centroid(self):
        X, p, s = random_instance(6, d=3, n=20, k=1, beta=2.0)
        s, report = inner_converge(X, p, s, SolverConfig(k_max=1))
        assert report.converged and report.iterations <= 2
        np.testing.assert_allclose(s.features[:, 0], X @ p, atol=1e-12)

    def test_two_clusters_recover_means(self):
        X, p, s = two_clusters()
        A, B = X[:, :25], X[:, 25:]
        s, report = inner_converge(X, p, s, SolverConfig(k_max=2))
        assert report.converged
        np.testing.assert_allclose(s.features[:, 0], A.mean(axis=1), atol=1e-9)
        np.testing.assert_allclose(s.features[:, 1], B.mean(axis=1), atol=1e-9)

    def test_tiny_beta_collapses_features(self):
        X, p, s = random_instance(8, d=3, n=15, k=3, beta=1e-12)
        s, _ = inner_converge(X, p, s, SolverConfig(k_max=3))
        np.testing.assert_allclose(s.features, np.repeat((X @ p)[:, None], 3, axis=1), atol=1e-6)

    @pytest.mark.parametrize("seed", range(4))
    def test_stationary_at_convergence(self, seed):
        X, p, s = random_instance(seed, d=3, n=40, k=3, beta=8.0)
        s, report = inner_converge(X, p, s, SolverConfig(k_max=3))
        assert report.converged
        s = AnnealerState(s.features, s.log_alphas, s.assoc, s.beta)
        mass = gibbs_update(X, s) @ p
        G = free_energy_gradient(X, p, s) / (2 * mass)
        assert np.max(np.abs(G)) < 1e-6

    @given(st.integers(0, 10_000), st.floats(0.1, 100.0))
    def test_trace_descends(self, seed, beta):
        X, p, s = random_instance(seed, d=3, n=25, k=3, beta=beta)
        _, report = inner_converge(X, p, s, SolverConfig(k_max=3))
        assert np.all(np.diff(report.free_energy_trace) <= 1e-10)

    def test_capacity_variant_meets_capacities(self):
        X, p, s = random_instance(9, d=3, n=30, k=3, beta=20.0)
        c = [0.5, 0.3, 0.2]
        s, report = inner_converge(X, p, s, SolverConfig(k_max=3), capacities=c)
        assert report.capacity_residual < 1e-8
        assert np.max(capacity_residuals(p, s.assoc, c)) < 1e-8
        assert np.all(np.diff(report.free_energy_trace) <= 1e-10)


class TestPhaseTransition:
    def test_coincident_points_never_split(self):
        X = np.tile([[0.2], [0.7]], 6)
        s = state([[0.2], [0.7]], [1.0], 1e8, 6)
        assert detect_phase_transition(X, np.full(6, 1 / 6), s) == []

    def test_two_point_oracle(self):
        X = np.array([[-1.0, 1.0]])
        p = np.array([0.5, 0.5])
        assert covariance_lambda_max(X, p) == pytest.approx(1.0, rel=1e-15)
        below = AnnealerState(np.zeros((1, 1)), np.zeros(1), np.ones((1, 2)), 0.49)
        above = AnnealerState(np.zeros((1, 1)), np.zeros(1), np.ones((1, 2)), 0.5)
        assert detect_phase_transition(X, p, below) == []
        assert detect_phase_transition(X, p, above) == [0]

    def test_blob_splits_at_first_scheduled_beta_past_critical(self):
        rng = make_rng(12)
        X = rng.standard_normal((2, 400)) * np.array([[0.3], [0.2]])
        p = np.full(400, 1 / 400)
        cfg = SolverConfig(k_max=2)
        Xc = X - X.mean(axis=1, keepdims=True)
        lam = np.linalg.eigvalsh(Xc @ Xc.T / 400)[-1]
        beta, _ = resolve_schedule(Xc, p, cfg)
        while 2 * beta * lam < 1:
            beta *= cfg.gamma
        run = anneal(X, p, cfg)
        assert run.transitions.entries[0] == (2, pytest.approx(beta, rel=1e-12))


class TestSplit:
    def test_halves_weight(self):
        s = state([[0.5], [0.5]], [1.0], 1.0, 3)
        s2, event = split_feature(s, 0, 1e-3, seed=4)
        np.testing.assert_allclose(s2.alphas, [0.5, 0.5])
        assert event.new_k == 2 and event.parent_index == 0
        assert np.linalg.norm(s2.features[:, 1] - s2.features[:, 0]) == pytest.approx(1e-3, rel=1e-12)
        np.testing.assert_allclose(s2.assoc.sum(axis=0), 1.0)

    def test_repeated_split_quarters_parent(self):
        s = state([[0.5], [0.5]], [1.0], 1.0, 3)
        s, _ = split_feature(s, 0, 1e-3)
        s, _ = split_feature(s, 0, 1e-3, counter=1)
        assert s.alphas[0] == pytest.approx(0.25)
        assert abs(s.alphas.sum() - 1.0) < 1e-10

    def test_explicit_direction_and_capacity_limit(self):
        s = state([[0.0], [0.0]], [1.0], 1.0, 2)
        s2, _ = split_feature(s, 0, 0.1, direction=[3.0, 4.0])
        np.testing.assert_allclose(s2.features[:, 1], [0.06, 0.08])
        with pytest.raises(CapacityReached):
            split_feature(s2, 0, 0.1, k_max=2)

    def test_random_direction_is_seeded(self):
        s = state([[0.0], [0.0], [0.0]], [1.0], 1.0, 2)
        a = split_feature(s, 0, 1.0, seed=5)[0].features
        b = split_feature(s, 0, 1.0, seed=5)[0].features
        c = split_feature(s, 0, 1.0, seed=6)[0].features
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)


class TestAnneal:
    def test_single_feature(self):
        X, p, _ = random_instance(13, d=3, n=20)
        run = anneal(X, p, SolverConfig(k_max=1))
        assert len(run.transitions) == 0 and run.splits == []
        np.testing.assert_allclose(run.state.features[:, 0], X @ p, atol=1e-12)

    def test_two_clusters_one_split(self):
        rng = make_rng(14)
        A = 1.0 + 0.02 * rng.standard_normal((1, 20))
        B = 3.0 + 0.02 * rng.standard_normal((1, 20))
        X = np.hstack([A, B])
        run = anneal(X, np.full(40, 1 / 40), SolverConfig(k_max=2))
        assert len(run.splits) == 1
        got = np.sort(run.state.features[0])
        np.testing.assert_allclose(got, [A.mean(), B.mean()], atol=1e-6)

    def test_three_clusters_ordered_transitions(self):
        rng = make_rng(5)
        C = np.array([[0, 0], [1, 0], [4, 3]], dtype=float).T
        X = np.hstack([C[:, [j]] + 0.05 * rng.standard_normal((2, 20)) for j in range(3)])
        run = anneal(X, np.full(60, 1 / 60), SolverConfig(k_max=3))
        (m2, b2), (m3, b3) = run.transitions.entries
        assert (m2, m3) == (2, 3) and b2 < b3
        for e in run.splits:
            assert run.beta_init <= e.beta_at_split <= run.beta_max

    def test_final_state_is_converged(self, hierarchical):
        X = hierarchical.matrix
        run = anneal(X.values, X.weights, SolverConfig(k_max=12))
        assert run.reports[-1].converged
        assert sum(r.converged for r in run.reports) >= 0.95 * len(run.reports)
        assert run.reports[-1].beta <= run.beta_max
        assert np.min(run.state.features) >= 0

    def test_capacity_satisfied_at_every_beta(self, three_clusters):
        X = three_clusters.matrix
        run = anneal(X.values, X.weights, SolverConfig(k_max=3, variant="capacity",
                                                       capacities=(0.5, 0.3, 0.2)))
        assert max(r.capacity_residual for r in run.reports) < 1e-8
        np.testing.assert_allclose(run.state.assoc @ X.weights, [0.5, 0.3, 0.2], atol=1e-8)
