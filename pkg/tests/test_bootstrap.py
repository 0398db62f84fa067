import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netiv import (
    ResidualVector,
    build_kernel,
    build_network,
    full_population,
    psd_sqrt,
    subpopulation,
    wild_bootstrap,
)
from netiv.bootstrap import replicate_statistics
from netiv.simulation import ring_band
from oracles import floyd_warshall, naive_omega, random_graph


def _vec(values, point=0.0, name="X"):
    return ResidualVector(name, np.asarray(values, dtype=float), {}, point)


class TestKernel:
    def test_zero_bandwidth_is_identity(self, ring6):
        k = build_kernel(ring6, full_population(ring6), 0)
        assert k.M == 1.0
        assert np.array_equal(k.omega, np.eye(6))
        assert np.allclose(k.omega_sqrt, np.eye(6))

    def test_four_ring_radius_one(self, ring4):
        k = build_kernel(ring4, full_population(ring4), 1)
        assert k.M == 3.0
        want = np.full((4, 4), 2 / 3)
        np.fill_diagonal(want, 1.0)
        assert np.allclose(k.omega, want)

    def test_root_squares_back(self, ring6):
        k = build_kernel(ring6, full_population(ring6), 2)
        assert np.allclose(k.omega_sqrt @ k.omega_sqrt, k.omega, atol=1e-10)

    def test_empty_and_negative(self, ring4):
        with pytest.raises(ValueError):
            build_kernel(ring4, subpopulation([]), 1)
        with pytest.raises(ValueError):
            build_kernel(ring4, full_population(ring4), -1)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 35), st.floats(0.02, 0.3), st.integers(0, 3), st.integers(0, 2**31))
    def test_matches_naive_and_psd(self, n, p, b, seed):
        rng = np.random.default_rng(seed)
        edges = random_graph(rng, n, p)
        net = build_network(n, edges)
        idx = np.flatnonzero(rng.random(n) < 0.8)
        if idx.size == 0:
            return
        S = subpopulation(idx)
        k = build_kernel(net, S, b)
        want = naive_omega(floyd_warshall(n, edges)[np.ix_(idx, idx)], b)
        assert np.allclose(k.omega, want, atol=1e-12)
        assert np.linalg.eigvalsh(k.omega).min() >= -1e-10 * max(1.0, k.omega.max())


class TestPsdSqrt:
    def test_diagonal(self):
        assert np.allclose(psd_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))

    def test_asymmetric_rejected(self):
        with pytest.raises(ValueError, match="symmetric"):
            psd_sqrt(np.array([[1.0, 0.5], [0.0, 1.0]]))

    def test_clamps_tiny_negative(self):
        om = np.array([[1.0, 1.0], [1.0, 1.0]]) + np.diag([-1e-15, 0.0])
        r = psd_sqrt(om)
        assert np.all(np.isfinite(r))
        assert np.allclose(r @ r, om, atol=1e-8)

    def test_rank_deficient(self):
        v = np.array([[1.0], [2.0], [2.0]])
        om = v @ v.T
        r = psd_sqrt(om)
        assert np.allclose(r @ r, om, atol=1e-10)


class TestWildBootstrap:
    def test_zero_residuals(self, ring6):
        k = build_kernel(ring6, full_population(ring6), 1)
        res = wild_bootstrap(_vec(np.zeros(6), point=0.7), k, 200, seed=3)
        assert res.ci == (0.7, 0.7) and res.se_boot == 0.0

    def test_deterministic_and_thread_invariant(self):
        net = ring_band(300, 2)
        S = full_population(net)
        k = build_kernel(net, S, 3)
        V = _vec(np.random.default_rng(0).normal(size=300))
        a = wild_bootstrap(V, k, 1100, seed=42)
        b = wild_bootstrap(V, k, 1100, seed=42, threads=4)
        assert np.array_equal(a.statistics, b.statistics)
        assert a.ci == b.ci
        c = wild_bootstrap(V, k, 1100, seed=43)
        assert not np.array_equal(a.statistics, c.statistics)

    def test_prefix_stable_in_b(self, ring6):
        # replicate r does not depend on how many replicates are requested
        k = build_kernel(ring6, full_population(ring6), 1)
        V = _vec([1.0, -2.0, 0.5, 0.5, 1.0, -1.0])
        short = wild_bootstrap(V, k, 100, seed=1).statistics
        long = wild_bootstrap(V, k, 700, seed=1).statistics
        assert np.array_equal(short, long[:100])

    def test_joint_draws_shared(self, ring6):
        k = build_kernel(ring6, full_population(ring6), 1)
        v = np.array([1.0, -2.0, 0.5, 0.5, 1.0, -1.0])
        r1, r2 = wild_bootstrap([_vec(v, 1.0, "A"), _vec(2 * v, 2.0, "B")], k, 300, seed=5)
        assert np.allclose(r2.statistics, 2 * r1.statistics)
        assert (r1.estimand, r2.estimand) == ("A", "B")

    def test_conditional_variance(self):
        net = ring_band(200, 2)
        S = full_population(net)
        k = build_kernel(net, S, 2)
        rng = np.random.default_rng(9)
        V = rng.normal(size=200)
        V -= V.mean()
        stat = wild_bootstrap(_vec(V), k, 20_000, seed=1).statistics
        assert np.var(stat, ddof=1) == pytest.approx(k.conditional_variance(V), rel=0.04)

    def test_zero_bandwidth_variance(self, ring6):
        k = build_kernel(ring6, full_population(ring6), 0)
        V = np.array([1.0, -1.0, 2.0, -2.0, 0.0, 0.0])
        assert k.conditional_variance(V) == pytest.approx(np.mean(V ** 2))

    def test_interval_orientation(self):
        net = ring_band(100, 1)
        k = build_kernel(net, full_population(net), 1)
        V = np.random.default_rng(2).normal(size=100)
        res = wild_bootstrap(_vec(V - V.mean(), 3.0), k, 2000, alpha=0.1, seed=4)
        lo, hi = res.ci
        assert lo < 3.0 < hi
        q = np.quantile(res.statistics, [0.05, 0.95])
        assert lo == pytest.approx(3.0 - q[1] / 10) and hi == pytest.approx(3.0 - q[0] / 10)
        assert res.ci_normal[0] < 3.0 < res.ci_normal[1]

    def test_bad_arguments(self, ring6):
        k = build_kernel(ring6, full_population(ring6), 1)
        with pytest.raises(ValueError):
            wild_bootstrap(_vec(np.zeros(6)), k, 0)
        with pytest.raises(ValueError):
            wild_bootstrap(_vec(np.zeros(6)), k, 10, alpha=1.5)
        with pytest.raises(ValueError):
            wild_bootstrap(_vec(np.zeros(5)), k, 10)


class TestSparsePath:
    def test_matches_dense(self):
        net = ring_band(150, 2)
        S = subpopulation(range(0, 150, 2))
        dense = build_kernel(net, S, 3)
        sparse = build_kernel(net, S, 3, dense_cap=0)
        assert sparse.omega is None and sparse.factor is not None
        V = np.random.default_rng(5).normal(size=S.size)
        assert sparse.conditional_variance(V) == pytest.approx(dense.conditional_variance(V))
        a = replicate_statistics(sparse, V, 20_000, 7)
        assert np.var(a) == pytest.approx(dense.conditional_variance(V), rel=0.04)


class TestWorkedExamples:
    def test_full_bandwidth_is_all_ones(self, ring6):
        k = build_kernel(ring6, full_population(ring6), 3)
        assert np.allclose(k.omega, 1.0)
        assert np.allclose(k.omega_sqrt @ k.omega_sqrt, 1.0, atol=1e-8)

    def test_identity_root(self):
        assert np.allclose(psd_sqrt(np.eye(5)), np.eye(5))

    def test_four_ring_root(self, ring4):
        om = build_kernel(ring4, full_population(ring4), 1).omega
        r = psd_sqrt(om)
        assert np.max(np.abs(r @ r - om)) <= 1e-8

    def test_basic_and_normal_widths_agree(self):
        net = ring_band(400, 2)
        k = build_kernel(net, full_population(net), 2)
        V = np.random.default_rng(8).normal(size=400)
        res = wild_bootstrap(_vec(V - V.mean()), k, 4000, seed=2)
        wb = res.ci[1] - res.ci[0]
        wn = res.ci_normal[1] - res.ci_normal[0]
        assert abs(wb / wn - 1) < 0.15
