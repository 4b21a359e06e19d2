import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.sparse.csgraph import connected_components
from scipy.spatial import Delaunay
import scipy.sparse as sp

from gfa.ctmc import build_reaction_ctmc
from gfa.embed import embed
from gfa.errors import ConfigError
from gfa.fluid import Trajectory, integrate_ode
from gfa.fpt import (FptCdf, TargetPredicate, VoronoiClassifier, classify_point, compare_cdfs,
                     crossing_time, fluid_fpt, predicate_fpt)
from gfa.models import lotka_volterra_network


def line_trajectory(t_end=1.0, n=11, start=0.0, stop=1.0):
    t = np.linspace(0, t_end, n)
    return Trajectory(t, np.linspace(start, stop, n)[:, None], "gfa_fluid")


def rotation(theta):
    return np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])


class TestFptCdf:
    def test_empirical_with_censoring(self):
        cdf = FptCdf.empirical([3.0, 1.0, 2.0], n_censored=1)
        np.testing.assert_array_equal(cdf.times, [1.0, 2.0, 3.0])
        np.testing.assert_allclose(cdf.cdf([0.5, 1.0, 2.5, 100.0]), [0, 0.25, 0.5, 0.75])
        assert cdf.censored_fraction == 0.25
        assert cdf.median() == 2.0
        assert cdf.quantile(0.9) == np.inf

    def test_step(self):
        cdf = FptCdf.step(2.0)
        np.testing.assert_array_equal(cdf.cdf([1.9, 2.0, 5.0]), [0, 1, 1])
        assert np.all(FptCdf.step(np.inf).cdf([0, 1e9]) == 0)

    def test_validation(self):
        with pytest.raises(ConfigError):
            FptCdf.empirical([-1.0])
        with pytest.raises(ConfigError):
            FptCdf.empirical([])
        with pytest.raises(ConfigError):
            FptCdf.step(np.nan)
        with pytest.raises(ConfigError):
            FptCdf("weird")

    @given(st.lists(st.floats(0, 100), min_size=1, max_size=50), st.integers(0, 20))
    def test_monotone_and_bounded(self, times, censored):
        cdf = FptCdf.empirical(times, censored)
        values = cdf.cdf(np.linspace(0, 101, 200))
        assert np.all(np.diff(values) >= 0)
        assert values.min() >= 0 and values.max() <= 1


class TestClassifier:
    def test_seed_itself_is_inside(self):
        seeds = np.random.default_rng(0).normal(size=(20, 2))
        mask = np.arange(20) < 5
        c = VoronoiClassifier(seeds, mask)
        assert all(classify_point(c, seeds[i]) for i in range(5))
        assert not any(classify_point(c, seeds[i]) for i in range(5, 20))

    def test_midpoint_rule_and_tie(self):
        c = VoronoiClassifier(np.array([[0.0], [1.0]]), [False, True])
        assert not classify_point(c, [0.4])
        assert classify_point(c, [0.6])
        assert not classify_point(c, [0.5])

    def test_requires_both_classes(self):
        with pytest.raises(ConfigError):
            VoronoiClassifier(np.zeros((3, 1)), [True, True, True])
        with pytest.raises(ConfigError):
            VoronoiClassifier(np.zeros((3, 1)), [False, False])
        with pytest.raises(ConfigError):
            classify_point(VoronoiClassifier(np.array([[0.0], [1.0]]), [0, 1]), [np.nan])

    def test_tree_matches_brute_force(self):
        rng = np.random.default_rng(1)
        seeds = rng.normal(size=(400, 3))
        mask = rng.random(400) < 0.3
        pts = rng.normal(size=(500, 3))
        c = VoronoiClassifier(seeds, mask)
        np.testing.assert_array_equal(c.contains(pts, brute=True), c.contains(pts, brute=False))
        ties = 0.5 * (seeds[:50] + seeds[50:100])
        np.testing.assert_array_equal(c.contains(ties, brute=True), c.contains(ties, brute=False))

    @given(st.integers(0, 10_000), st.floats(0, 2 * np.pi), st.floats(-50, 50), st.floats(-50, 50))
    def test_rigid_motion_invariance(self, seed, theta, dx, dy):
        rng = np.random.default_rng(seed)
        seeds = rng.normal(size=(30, 2))
        mask = rng.random(30) < 0.4
        mask[0], mask[1] = True, False
        pts = rng.normal(size=(40, 2)) * 1.5
        rot, shift = rotation(theta), np.array([dx, dy])
        a = VoronoiClassifier(seeds, mask).contains(pts)
        b = VoronoiClassifier(seeds @ rot.T + shift, mask).contains(pts @ rot.T + shift)
        # only points essentially on a cell boundary may change under rounding
        d_t = np.min(np.linalg.norm(pts[:, None] - seeds[mask][None], axis=2), axis=1)
        d_o = np.min(np.linalg.norm(pts[:, None] - seeds[~mask][None], axis=2), axis=1)
        clear = np.abs(d_t - d_o) > 1e-9
        np.testing.assert_array_equal(a[clear], b[clear])

    def test_lotka_volterra_band_is_contiguous(self):
        net = lotka_volterra_network(N=30)
        q, labels = build_reaction_ctmc(net)
        emb = embed(q, 2)
        mask = TargetPredicate("F >= 0.2*N and F < 0.6*N", net.species, net.cap).mask(labels)
        tri = Delaunay(emb.coords)
        rows, cols = [], []
        for simplex in tri.simplices:
            for i in simplex:
                for j in simplex:
                    if i != j and mask[i] and mask[j]:
                        rows.append(i)
                        cols.append(j)
        adj = sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(q.n_states,) * 2)
        labels_cc = connected_components(adj, directed=False)[1]
        assert len(set(labels_cc[mask])) == 1


class TestFluidFpt:
    seeds = np.array([[0.0], [1.0]])

    def test_start_inside(self):
        c = VoronoiClassifier(self.seeds, [False, True])
        assert fluid_fpt(line_trajectory(start=0.9, stop=1.0), c).crossing_time == 0.0

    def test_never_entering(self):
        c = VoronoiClassifier(self.seeds, [False, True])
        cdf = fluid_fpt(line_trajectory(start=-1.0, stop=0.2), c)
        assert cdf.crossing_time == np.inf
        assert np.all(cdf.cdf([0, 1, 1e6]) == 0)

    def test_bisected_crossing(self):
        c = VoronoiClassifier(self.seeds, [False, True])
        t = fluid_fpt(line_trajectory(n=4), c).crossing_time
        assert 0.5 < t <= 0.5 + 1e-6

    def test_dense_output_used(self):
        tr = integrate_ode(lambda t, y: np.ones(1), [0.0], np.linspace(0, 2, 3))
        c = VoronoiClassifier(np.array([[0.0], [1.3]]), [False, True])
        assert fluid_fpt(tr, c).crossing_time == pytest.approx(0.65, abs=2e-6)

    def test_coarse_samples_are_refined(self):
        # the path jumps over a thin target cell between two samples
        seeds = np.array([[0.0], [0.5], [1.0]])
        c = VoronoiClassifier(seeds, [False, True, False])
        tr = line_trajectory(n=2)
        assert fluid_fpt(tr, c).crossing_time == pytest.approx(0.25, abs=2e-6)

    def test_refinement_changes_crossing_less_than_bracket(self):
        seeds = np.random.default_rng(3).uniform(0, 10, size=(40, 1))
        mask = seeds[:, 0] > 7
        c = VoronoiClassifier(seeds, mask)
        coarse = line_trajectory(t_end=10, n=21, stop=10)
        fine = line_trajectory(t_end=10, n=201, stop=10)
        a, b = fluid_fpt(coarse, c).crossing_time, fluid_fpt(fine, c).crossing_time
        assert abs(a - b) < 0.5

    @given(st.integers(0, 10_000))
    def test_monotone_under_target_growth(self, seed):
        rng = np.random.default_rng(seed)
        seeds = rng.normal(size=(25, 2))
        small = rng.random(25) < 0.2
        small[0], small[1] = True, False
        big = small | (rng.random(25) < 0.3)
        big[1] = False
        t = np.linspace(0, 1, 30)
        tr = Trajectory(t, np.column_stack([np.cos(3 * t), np.sin(5 * t)]) * 2, "gfa_fluid")
        a = fluid_fpt(tr, VoronoiClassifier(seeds, small)).crossing_time
        b = fluid_fpt(tr, VoronoiClassifier(seeds, big)).crossing_time
        assert b <= a

    def test_dimension_mismatch(self):
        c = VoronoiClassifier(np.zeros((2, 2)) + [[0, 0], [1, 1]], [False, True])
        with pytest.raises(ConfigError):
            fluid_fpt(line_trajectory(), c)


class TestCompare:
    def test_identical(self):
        a = FptCdf.empirical([1.0, 2.0, 3.0])
        assert compare_cdfs(a, a, np.linspace(0, 4, 50)).sup_distance == 0.0

    def test_step_against_exponential(self):
        lam, t_star = 0.5, 1.7
        samples = np.random.default_rng(0).exponential(1 / lam, size=20_000)
        rep = compare_cdfs(FptCdf.step(t_star), FptCdf.empirical(samples), np.linspace(0, 10, 100))
        assert rep.quantile_at_step == pytest.approx(1 - np.exp(-lam * t_star), abs=0.015)
        assert rep.median_ratio == pytest.approx(t_star / (np.log(2) / lam), rel=0.03)

    def test_infinite_step(self):
        other = FptCdf.empirical([1.0, 2.0, 3.0], n_censored=1)
        rep = compare_cdfs(FptCdf.step(np.inf), other, np.linspace(0, 5, 11))
        assert rep.sup_distance == pytest.approx(0.75)
        assert rep.quantile_at_step is None
        assert set(rep.as_dict()) == {"sup_distance", "quantile_at_step", "median_ratio"}


class TestPredicate:
    def test_band(self):
        p = TargetPredicate("F >= 0.2*N and F < 0.6*N", ("R", "F"), 30)
        np.testing.assert_array_equal(p([[0, 5], [0, 6], [3, 17], [3, 18]]),
                                      [False, True, True, False])

    def test_ratio_and_chain(self):
        p = TargetPredicate("R/N >= 1/10", ("S", "I", "R"), 30)
        np.testing.assert_array_equal(p([[27, 1, 2], [25, 2, 3]]), [False, True])
        chain = TargetPredicate("2 <= x < 4 or not x > 0", ("x",), 1)
        np.testing.assert_array_equal(chain([[0], [1], [2], [3], [4]]), [1, 0, 1, 1, 0])
        neg = TargetPredicate("-x + 3 == 1", ("x",), 1)
        np.testing.assert_array_equal(neg([[2], [3]]), [True, False])

    @pytest.mark.parametrize("expr", ["__import__('os')", "x.real > 0", "y > 1", "x ** 2 > 1",
                                      "x >", "[x]"])
    def test_rejected(self, expr):
        with pytest.raises(ConfigError):
            TargetPredicate(expr, ("x",), 10)

    def test_classical_crossing(self):
        t = np.linspace(0, 2, 5)
        tr = Trajectory(t, np.column_stack([t * 10, 30 - t * 10, 0 * t]), "classical_fluid")
        p = TargetPredicate("S >= 12", ("S", "I", "R"), 30)
        assert predicate_fpt(tr, p).crossing_time == pytest.approx(1.2, abs=2e-6)

    def test_crossing_time_helper(self):
        t = np.linspace(0, 1, 3)
        assert crossing_time(t, t, lambda p: p[:, 0] >= 2) == np.inf
