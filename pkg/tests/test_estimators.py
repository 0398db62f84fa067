import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netiv import (
    DegenerateDenominator,
    EmptyCell,
    ExposureSpec,
    KnownProbabilities,
    StudyData,
    ade,
    aie,
    aoe,
    ase,
    build_network,
    cell_probability,
    compute_exposures,
    degree_subpopulation,
    full_population,
    interference_sets,
    ipw_mean_conditional,
    ipw_mean_marginal,
    spillover_diagnostic,
    subpopulation,
)
from netiv.estimators import marginal_contrast
from netiv.simulation import DgpSpec, Model, ring_band
from oracles import Enumeration, all_assignments, floyd_warshall, naive_exposure, random_graph

S4 = subpopulation([0, 1, 2, 3])
Z4 = np.array([1, 0, 1, 0])
CONST4 = np.zeros(4, dtype=int)


class TestCellProbability:
    def test_constant(self):
        assert cell_probability(S4, Z4, CONST4, 1, 0) == 0.5

    def test_all_treated(self):
        Z = np.ones(4, dtype=int)
        assert cell_probability(S4, Z, None, 1) == 1.0
        assert cell_probability(S4, Z, None, 0) == 0.0

    def test_threshold_cell(self, ring4):
        T = compute_exposures(ring4, Z4, CONST4, ExposureSpec.parse("threshold:src=Z,r=1,c=0"))
        assert cell_probability(S4, Z4, T, 1, 0) == 0.5


class TestIpwMeans:
    Y = np.array([2.0, 4.0, 6.0, 8.0])

    def test_treated(self):
        assert ipw_mean_conditional(S4, self.Y, Z4, CONST4, 1, 0) == 4.0

    def test_control(self):
        assert ipw_mean_conditional(S4, self.Y, Z4, CONST4, 0, 0) == 6.0

    def test_all_treated_is_mean(self):
        Z = np.ones(4, dtype=int)
        assert ipw_mean_conditional(S4, self.Y, Z, CONST4, 1, 0) == pytest.approx(5.0)

    def test_empty_cell_named(self):
        with pytest.raises(EmptyCell) as exc:
            ipw_mean_conditional(S4, self.Y, Z4, CONST4, 1, 3)
        assert (exc.value.z, exc.value.t) == (1, 3)

    def test_marginal(self):
        assert ipw_mean_marginal(S4, self.Y, Z4, 0) == 6.0


class TestAde:
    def test_hand_example(self):
        data = StudyData([2, 4, 6, 8], Z4, Z4)
        r = ade(S4, data, CONST4, 0)
        assert (r.adey.point, r.aded.point, r.lade.point) == (-2.0, 1.0, -2.0)
        assert r.lade.components == {"numerator": -2.0, "denominator": 1.0}
        assert sum(r.adey.cell_counts.values()) == 4

    def test_constant_outcome(self):
        data = StudyData([3, 3, 3, 3], [1, 0, 0, 1], Z4)
        assert ade(S4, data, CONST4, 0).adey.point == 0.0

    def test_perfect_compliance(self):
        data = StudyData([1, 5, 2, 7], Z4, Z4)
        assert ade(S4, data, CONST4, 0).aded.point == 1.0

    def test_zero_aded_flags(self):
        data = StudyData([1, 2, 3, 4], [1, 1, 1, 1], Z4)
        r = ade(S4, data, CONST4, 0)
        assert r.lade.point is None and "degenerate_denominator" in r.lade.flags
        with pytest.raises(DegenerateDenominator):
            ade(S4, data, CONST4, 0, strict=True)

    def test_weak_and_small_cell_flags(self):
        n = 40
        Z = np.tile([1, 0], n // 2)
        D = np.zeros(n, dtype=int)
        D[[0, 2, 1]] = 1  # ADED = 2/20 - 1/20 = 0.05
        S = subpopulation(range(n))
        data = StudyData(np.arange(n, dtype=float), D, Z)
        T = np.zeros(n, dtype=int)
        r = ade(S, data, T, 0, weak=0.06)
        assert r.aded.point == pytest.approx(0.05)
        assert "weak_relevance" in r.lade.flags
        assert not any(f.startswith("small_cell") for f in r.adey.flags)
        r = ade(S, data, T, 0, min_cell=25)
        assert "small_cell(Z=1,T=0)" in r.adey.flags

    def test_empty_cell(self):
        data = StudyData([2, 4, 6, 8], Z4, Z4)
        with pytest.raises(EmptyCell):
            ade(S4, data, CONST4, 1)

    def test_constant_exposure_equals_marginal_contrast(self, rng):
        for _ in range(20):
            n = 30
            data = StudyData(rng.normal(size=n), rng.integers(0, 2, n), rng.integers(0, 2, n))
            S = subpopulation(np.flatnonzero(rng.random(n) < 0.8))
            if len(set(data.Z[S.indices])) < 2:
                continue
            r = ade(S, data, np.zeros(n, dtype=int), 0)
            assert r.adey.point == marginal_contrast(S, data.Y, data.Z)
            assert r.aded.point == marginal_contrast(S, data.D, data.Z)


class TestAie:
    def test_constant_outcome(self, ring4):
        E = interference_sets(ring4, S4, 1)
        data = StudyData([1, 1, 1, 1], [0, 1, 0, 1], [1, 0, 1, 1])
        assert aie(S4, data, E).aiey.point == pytest.approx(0.0, abs=1e-15)

    def test_empty_sets(self):
        net = build_network(4, [])
        E = interference_sets(net, S4, 1)
        data = StudyData([1, 2, 3, 4], [0, 1, 0, 1], Z4)
        r = aie(S4, data, E)
        assert r.aiey.point == 0.0 and r.aied.point == 0.0

    def test_hand_example(self, ring4):
        E = interference_sets(ring4, S4, 1)
        data = StudyData([0, 1, 0, 1], [1, 0, 0, 0], [1, 0, 0, 0])
        r = aie(S4, data, E)
        assert r.aiey.components["mu1"] == pytest.approx(2.0)
        assert r.aiey.components["mu0"] == pytest.approx(2 / 3)
        assert r.aiey.point == pytest.approx(4 / 3)
        assert r.laie.point * r.aded.point == pytest.approx(r.aiey.point)

    def test_alternative_ratio_exposed(self, ring4):
        E = interference_sets(ring4, S4, 1)
        data = StudyData([0, 1, 0, 1], [1, 0, 1, 0], [1, 0, 0, 0])
        r = aie(S4, data, E)
        assert r.aied.point == pytest.approx(-4 / 3)
        assert r.laie.components["aiey_over_aied"] == pytest.approx(r.aiey.point / r.aied.point)
        flat = aie(S4, StudyData([0, 1, 0, 1], [1, 1, 0, 0], [1, 0, 0, 0]), E)
        assert flat.aied.point == 0.0 and flat.laie.components["aiey_over_aied"] is None

    def test_needs_both_arms(self, ring4):
        E = interference_sets(ring4, S4, 1)
        data = StudyData([0, 1, 0, 1], [1, 0, 0, 0], [1, 1, 1, 1])
        with pytest.raises(EmptyCell):
            aie(S4, data, E)


class TestAoe:
    def test_empty_sets_reduce_to_marginal(self):
        net = build_network(4, [])
        E = interference_sets(net, S4, 2)
        data = StudyData([1.5, 2, 3, 4], [0, 1, 0, 1], Z4)
        r = aoe(S4, data, E)
        assert r.aoey.point == pytest.approx(marginal_contrast(S4, data.Y, data.Z))

    def test_ring_decomposition(self, ring4):
        E = interference_sets(ring4, S4, 1)
        data = StudyData([0, 1, 0, 1], [1, 0, 0, 0], [1, 0, 0, 0])
        r = aoe(S4, data, E)
        expect = aie(S4, data, E).aiey.point + marginal_contrast(S4, data.Y, data.Z)
        assert r.aoey.point == pytest.approx(expect)
        assert r.laoe.point * r.laoe.components["denominator"] == pytest.approx(r.aoey.point)


class TestAse:
    def test_constant_outcome(self, ring6):
        Z = np.array([1, 0, 1, 1, 0, 0])
        T = compute_exposures(ring6, Z, None, ExposureSpec.parse("count:src=Z,r=1"))
        data = StudyData(np.full(6, 2.0), Z, Z)
        S = full_population(ring6)
        t_vals = sorted(set(T.values[Z == 1].tolist()))
        r = ase(S, data, T, 1, t_vals[-1], t_vals[0])
        assert r.asey.point == pytest.approx(0.0, abs=1e-15)

    def test_same_level_rejected(self, ring6):
        data = StudyData(np.zeros(6), np.zeros(6, int), np.ones(6, int))
        with pytest.raises(ValueError):
            ase(full_population(ring6), data, np.zeros(6, int), 1, 0, 0)

    def test_six_node_cell_means(self, ring6):
        Z = np.array([1, 0, 1, 1, 0, 0])
        spec = ExposureSpec.parse("threshold:src=Z,r=1,c=0")
        T = compute_exposures(ring6, Z, None, spec).values
        Y = np.array([3.0, -1.0, 2.5, 0.5, 4.0, 1.0])
        D = np.array([1, 0, 1, 0, 1, 0])
        data = StudyData(Y, D, Z)
        S = full_population(ring6)
        # brute force: IPW cell mean equals the plain mean over the cell
        for z in (0, 1):
            a, b = (Z == z) & (T == 1), (Z == z) & (T == 0)
            if not a.any() or not b.any():
                continue
            r = ase(S, data, T, z, 1, 0)
            assert r.asey.point == pytest.approx(Y[a].mean() - Y[b].mean())
            assert r.ased.point == pytest.approx(D[a].mean() - D[b].mean())


class TestEnumeration:
    """Oracle-mode expectations equal directly summed estimands (small cases)."""

    def _setup(self, n, edges, spec, S, K, seed, p=0.4):
        rng = np.random.default_rng(seed)
        A, pi = all_assignments(n, p)
        fw = floyd_warshall(n, edges)
        T = np.array([naive_exposure(fw, a, None, spec.kind, spec.radius, "Z", spec.cutoff)
                      for a in A])
        y = rng.normal(size=(len(A), n))
        d = rng.integers(0, 2, size=(len(A), n))
        E = {i: [j for j in range(n) if 1 <= fw[i, j] <= K] for i in S}
        return A, pi, y, d, T, Enumeration(A, pi, y, d, T, S, E)

    def test_ade_and_itt_form(self):
        n, edges = 6, [(i, (i + 1) % 6) for i in range(6)]
        spec = ExposureSpec.parse("count:src=Z,r=1")
        net = build_network(n, edges)
        S = full_population(net)
        A, pi, y, d, T, en = self._setup(n, edges, spec, list(range(n)), 1, 7)
        i0 = 0
        probs = KnownProbabilities(
            {(z, t): en.cell_prob(i0, z, t) for z in (0, 1) for t in range(3)},
            {z: en.cell_prob(i0, z) for z in (0, 1)})
        for t in range(3):
            exp = sum(w * ade(S, StudyData(y[k], d[k], A[k]), T[k], t, probs=probs).adey.point
                      for k, w in enumerate(pi))
            assert exp == pytest.approx(en.ade(y, t), abs=1e-12)
            assert en.ade(y, t) == pytest.approx(en.ade_itt(y, t, 0.4), abs=1e-12)


class TestPermutation:
    def test_reports_invariant(self, rng):
        n = 25
        edges = random_graph(rng, n, 0.15)
        net = build_network(n, edges)
        perm = rng.permutation(n)  # old id k -> new id perm[k]
        net2 = build_network(n, [(perm[i], perm[j]) for i, j in edges])
        Y, D, Z = rng.normal(size=n), rng.integers(0, 2, n), rng.integers(0, 2, n)
        inv = np.argsort(perm)
        data = StudyData(Y, D, Z)
        data2 = StudyData(Y[inv], D[inv], Z[inv])
        spec = ExposureSpec.parse("threshold:src=Z,r=1,c=0")
        T = compute_exposures(net, Z, D, spec)
        T2 = compute_exposures(net2, data2.Z, data2.D, spec)
        S = full_population(net)
        S2 = full_population(net2)
        E = interference_sets(net, S, 2)
        E2 = interference_sets(net2, S2, 2)
        for a, b in ((ade(S, data, T, 1), ade(S2, data2, T2, 1)),
                     (aie(S, data, E), aie(S2, data2, E2)),
                     (aoe(S, data, E), aoe(S2, data2, E2))):
            for ra, rb in zip(a, b):
                assert ra.point == pytest.approx(rb.point, rel=1e-12, abs=1e-12)
                assert ra.cell_counts == rb.cell_counts


@st.composite
def random_study(draw):
    seed = draw(st.integers(0, 2**31))
    rng = np.random.default_rng(seed)
    n = draw(st.integers(4, 60))
    net = build_network(n, random_graph(rng, n, draw(st.floats(0.02, 0.3))))
    data = StudyData(rng.normal(size=n) * 3, rng.integers(0, 2, n), rng.integers(0, 2, n))
    return net, data, rng


class TestIdentities:
    @settings(max_examples=80, deadline=None)
    @given(random_study(), st.integers(1, 3))
    def test_ratio_and_decomposition(self, study, K):
        net, data, rng = study
        S = full_population(net)
        if len(set(data.Z.tolist())) < 2:
            return
        E = interference_sets(net, S, K)
        ri = aie(S, data, E)
        ro = aoe(S, data, E)
        marg = marginal_contrast(S, data.Y, data.Z)
        assert ro.aoey.point == pytest.approx(marg + ri.aiey.point, rel=1e-10, abs=1e-10)
        assert ro.aoed.point == pytest.approx(marginal_contrast(S, data.D, data.Z) + ri.aied.point,
                                              rel=1e-10, abs=1e-10)
        if ri.aded.point != 0:
            assert ri.laie.point * ri.aded.point == pytest.approx(ri.aiey.point, rel=1e-12, abs=1e-14)
            assert ro.laoe.point * ri.aded.point == pytest.approx(ro.aoey.point, rel=1e-12, abs=1e-14)


class TestSpilloverDiagnostic:
    def test_single_level_not_applicable(self, ring6):
        data = StudyData(np.zeros(6), np.zeros(6, int), np.array([1, 0, 1, 0, 1, 0]))
        out = spillover_diagnostic(full_population(ring6), data, np.zeros(6, int), ring6, 2)
        assert out.rows == [] and out.flags == ["not_applicable"]

    def _ring_data(self, spill, seed, n=3000):
        net = ring_band(n, 1)
        rng = np.random.default_rng(seed)
        Z = (rng.random(n) < 0.5).astype(int)
        T = compute_exposures(net, Z, None, ExposureSpec.parse("threshold:src=Z,r=1,c=0"))
        D = ((rng.normal(size=n) + Z + spill * T.values) > 0.5).astype(int)
        Y = 1.0 + 2.0 * D + rng.normal(size=n)
        return net, StudyData(Y, D, Z), T

    def test_no_spillover_dgp_is_quiet(self):
        net, data, T = self._ring_data(0.0, 4)
        out = spillover_diagnostic(full_population(net), data, T, net, 2, critical=3.5)
        assert out.rows
        assert "spillover_evidence" not in out.flags

    def test_detects_spillover(self):
        net, data, T = self._ring_data(1.5, 5)
        out = spillover_diagnostic(full_population(net), data, T, net, 2)
        assert "spillover_evidence" in out.flags
        ased = [r for r in out.rows if r["estimand"] == "ASED"]
        assert all(r["significant"] for r in ased)

    def test_dgp1_correct_iem_ased_nonzero(self):
        dgp = DgpSpec("DGP1", n=2000, L=2, coef_seed=3)
        model = Model(dgp)
        data = model.sample(np.random.default_rng(9))
        spec = ExposureSpec.parse("count:src=Z,r=2")
        T = compute_exposures(model.net, data.Z, data.D, spec)
        out = spillover_diagnostic(full_population(model.net), data, T, model.net, 4)
        assert "spillover_evidence" in out.flags

    def test_skips_empty_pairs(self, ring6):
        Z = np.array([1, 1, 1, 1, 0, 0])
        T = np.array([0, 1, 2, 2, 1, 1])
        data = StudyData(np.arange(6.0), np.array([1, 0, 1, 0, 1, 0]), Z)
        out = spillover_diagnostic(full_population(ring6), data, T, ring6, 1)
        assert out.notes  # z=0 has only level 1


def test_degree_subpopulation_recipe():
    # a star's leaves all see the same exposure distribution
    net = build_network(5, [(0, 1), (0, 2), (0, 3), (0, 4)])
    S = degree_subpopulation(net, 1)
    assert S.indices.tolist() == [1, 2, 3, 4]
