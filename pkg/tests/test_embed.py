import numpy as np
import pytest
import scipy.linalg as la
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from gfa.ctmc import GeneratorMatrix, build_reaction_ctmc, label_index, uniformise
from gfa.embed import (Embedding, SymmetricOperator, diffusion_map, diffusion_operator, embed,
                       eigensolve_symmetric, laplacian_eigenmap, laplacian_operator)
from gfa.errors import ConfigError, DisconnectedGraphError
from gfa.models import birth_death_network, grid_walk

from conftest import random_generator


def path_cosine(n, k=1):
    x = np.arange(1, n + 1)
    v = np.cos(np.pi * k / n * (x - 0.5))
    return v / np.linalg.norm(v)


def grid_analytic_lowest(shape):
    """Analytic eigenvectors spanning the lowest nonzero eigenspace of the grid Laplacian."""
    n_min = max(shape)
    vecs = []
    for axis, n in enumerate(shape):
        if n != n_min:
            continue
        factors = [np.ones(m) / np.sqrt(m) for m in shape]
        factors[axis] = path_cosine(n)
        v = factors[0]
        for f in factors[1:]:
            v = np.kron(v, f)
        vecs.append(v)
    return np.column_stack(vecs)


def center_spacing_cv(coords, labels, shape):
    """Coefficient of variation of neighbour distances in the central fifth of the grid."""
    idx = label_index(labels)
    gaps = []
    for c, i in idx.items():
        for axis in range(len(shape)):
            nb = list(c)
            nb[axis] += 1
            nb = tuple(nb)
            if nb not in idx:
                continue
            lo, hi = 0.4 * (shape[axis] - 1), 0.6 * (shape[axis] - 1)
            if lo <= c[axis] and nb[axis] <= hi:
                gaps.append(np.linalg.norm(coords[idx[nb]] - coords[i]))
    gaps = np.array(gaps)
    return gaps.std() / gaps.mean(), gaps.size


class TestEigensolver:
    def test_diagonal(self):
        vals, vecs = eigensolve_symmetric(SymmetricOperator(np.diag([3.0, 1.0, 2.0]), "H_ss1"),
                                          2, "smallest")
        np.testing.assert_allclose(vals, [1.0, 2.0])
        np.testing.assert_allclose(np.abs(vecs), [[0, 0], [1, 0], [0, 1]], atol=1e-14)

    def test_largest_descending(self):
        vals, _ = eigensolve_symmetric(SymmetricOperator(np.diag([3.0, 1.0, 2.0]), "H_ss1"),
                                       2, "largest")
        np.testing.assert_allclose(vals, [3.0, 2.0])

    def test_grid_laplacian_closed_form(self):
        q, _ = grid_walk((4, 4))
        lap, _ = laplacian_operator(q)
        vals, _ = eigensolve_symmetric(SymmetricOperator(lap, "unweighted_laplacian"), 4)
        lam1 = 2 * (1 - np.cos(np.pi / 4))
        np.testing.assert_allclose(vals, [0.0, lam1, lam1, 2 * lam1], atol=1e-12)

    @pytest.mark.parametrize("seed", range(3))
    def test_random_matches_dense(self, seed):
        a = np.random.default_rng(seed).normal(size=(50, 50))
        a = (a + a.T) / 2
        ref_vals, ref_vecs = la.eigh(a)
        vals, vecs = eigensolve_symmetric(SymmetricOperator(a, "H_ss1"), 5, "smallest")
        np.testing.assert_allclose(vals, ref_vals[:5], atol=1e-8)
        for k in range(5):
            assert abs(abs(vecs[:, k] @ ref_vecs[:, k]) - 1) < 1e-8
            assert np.argmax(np.abs(vecs[:, k])) == np.argmax(vecs[:, k])

    def test_sparse_path_above_dense_limit(self):
        shape = (45, 46)
        q, _ = grid_walk(shape)
        lap, _ = laplacian_operator(q)
        assert lap.shape[0] > 2000
        vals, vecs = eigensolve_symmetric(SymmetricOperator(lap, "unweighted_laplacian"), 3)
        expect = sorted(2 * (1 - np.cos(np.pi * a / shape[0])) + 2 * (1 - np.cos(np.pi * b / shape[1]))
                        for a in range(3) for b in range(3))[:3]
        np.testing.assert_allclose(vals, expect, atol=1e-9)
        np.testing.assert_allclose(np.linalg.norm(vecs, axis=0), 1.0)

    def test_argument_checks(self):
        op = SymmetricOperator(np.eye(3), "H_ss1")
        with pytest.raises(ConfigError):
            eigensolve_symmetric(op, 3)
        with pytest.raises(ConfigError):
            eigensolve_symmetric(op, 1, "middle")
        with pytest.raises(ConfigError):
            SymmetricOperator(np.array([[1.0, 2.0], [0.0, 1.0]]), "H_ss1")


class TestDiffusionMap:
    def test_complete_graph(self):
        w = np.ones((3, 3))
        one = diffusion_map(w, 1)
        assert abs(one.coords[:, 0].sum()) < 1e-12
        two = diffusion_map(w, 2)
        d = [np.linalg.norm(two.coords[i] - two.coords[j]) for i, j in [(0, 1), (0, 2), (1, 2)]]
        np.testing.assert_allclose(d, d[0], rtol=1e-10)

    def test_path_graph_monotone(self):
        w = np.array([[1.0, 1, 0], [1, 1, 1], [0, 1, 1]])
        y = diffusion_map(w, 1).coords[:, 0]
        assert np.all(np.diff(y) > 0) or np.all(np.diff(y) < 0)
        # brute-force oracle: second-largest eigenvector of the 3x3 operator
        h = diffusion_operator(w).matrix
        _, vecs = la.eigh(h)
        assert abs(abs(vecs[:, 1] @ y) - 1) < 1e-10

    def test_operator_construction(self):
        w = uniformise(random_generator(6, seed=1)).toarray()
        s = (w + w.T) / 2
        p_inv = np.diag(1 / s.sum(axis=1))
        v = p_inv @ s @ p_inv
        d = np.diag(1 / np.sqrt(v.sum(axis=1)))
        np.testing.assert_allclose(diffusion_operator(w).matrix, d @ v @ d, atol=1e-14)

    def test_trivial_excluded_exactly_once(self):
        q = random_generator(12, seed=5)
        emb = diffusion_map(uniformise(q), 4)
        assert emb.eigenvalues.shape == (4,)
        assert np.all(emb.eigenvalues > 1e-10)
        assert np.all(np.diff(emb.eigenvalues) >= 0)
        h = diffusion_operator(uniformise(q)).matrix
        top = la.eigh(h)[0][::-1]
        np.testing.assert_allclose(1 - emb.eigenvalues, top[1:5], atol=1e-10)

    def test_relabeling_invariance(self):
        q = random_generator(10, seed=7)
        w = uniformise(q).toarray()
        perm = np.random.default_rng(0).permutation(10)
        a = diffusion_map(w, 3).coords
        b = diffusion_map(w[np.ix_(perm, perm)], 3).coords
        for k in range(3):
            col = a[perm, k]
            assert min(np.abs(col - b[:, k]).max(), np.abs(col + b[:, k]).max()) < 1e-10

    def test_disconnected(self):
        w = sp.block_diag([np.ones((2, 2)), np.ones((3, 3))]).toarray()
        with pytest.raises(DisconnectedGraphError) as info:
            diffusion_map(w, 1)
        assert info.value.n_components == 2

    def test_preconditions(self):
        with pytest.raises(ConfigError):
            diffusion_map(np.ones((3, 3)), 3)
        with pytest.raises(ConfigError):
            diffusion_map(np.array([[1.0, -1.0], [0.0, 1.0]]), 1)
        with pytest.raises(ConfigError):
            diffusion_map(np.array([[2.0, 1.0], [1.0, 1.0]]), 1)

    def test_diffusion_time_scaling(self):
        w = uniformise(random_generator(8, seed=2)).toarray()
        a = diffusion_map(w, 2)
        b = diffusion_map(w, 2, diffusion_time=3.0)
        np.testing.assert_allclose(b.coords, a.coords * np.exp(-3.0 * a.eigenvalues))

    def test_birth_death_grid_is_preserved(self):
        q, labels = build_reaction_ctmc(birth_death_network(N=30))
        emb = embed(q, 2)
        idx = label_index(labels)
        cos = []
        for (a, b), i in idx.items():
            if (a + 1, b) in idx and (a, b + 1) in idx:
                da = emb.coords[idx[(a + 1, b)]] - emb.coords[i]
                db = emb.coords[idx[(a, b + 1)]] - emb.coords[i]
                cos.append(abs(da @ db) / (np.linalg.norm(da) * np.linalg.norm(db)))
        assert np.mean(cos) < 0.2
        assert emb.method == "diffusion_map" and emb.eps == pytest.approx(0.5 / 30)


class TestLaplacianEigenmap:
    def test_path3_cosine(self):
        q, _ = grid_walk((3,))
        for variant in ("generalized", "combinatorial"):
            y = laplacian_eigenmap(q, 1, variant).coords[:, 0]
            ref = np.array([np.sqrt(3) / 2, 0, -np.sqrt(3) / 2])
            assert abs(abs(y @ ref) / (np.linalg.norm(y) * np.linalg.norm(ref)) - 1) < 1e-12

    def test_generalized_matches_brute_force(self):
        q = random_generator(9, seed=3)
        lap, deg = laplacian_operator(q)
        vals, vecs = la.eigh(lap.toarray(), np.diag(deg))
        emb = laplacian_eigenmap(q, 2)
        np.testing.assert_allclose(emb.eigenvalues, vals[1:3], atol=1e-10)
        for k in range(2):
            u, v = emb.coords[:, k], vecs[:, k + 1]
            assert abs(abs(u @ v) / (np.linalg.norm(u) * np.linalg.norm(v)) - 1) < 1e-8

    @pytest.mark.parametrize("n", [3, 10, 30])
    def test_path_combinatorial_cosine(self, n):
        q, _ = grid_walk((n,))
        emb = laplacian_eigenmap(q, 1, "combinatorial")
        assert la.subspace_angles(emb.coords, path_cosine(n)[:, None]).max() < 1e-6

    @pytest.mark.parametrize("shape", [(4, 4), (6, 4), (3, 3, 3)])
    def test_grid_degenerate_subspace(self, shape):
        q, _ = grid_walk(shape)
        analytic = grid_analytic_lowest(shape)
        m = analytic.shape[1]
        emb = laplacian_eigenmap(q, m, "combinatorial")
        np.testing.assert_allclose(emb.eigenvalues, 2 * (1 - np.cos(np.pi / max(shape))),
                                   atol=1e-12)
        assert la.subspace_angles(emb.coords, analytic).max() < 1e-6

    def test_star_leaves_symmetric(self):
        # the lowest nonzero eigenvalue of K_{1,3} is double; the automorphisms permuting
        # leaves act on that plane, so leaves sit at equal distance around the centre
        q = GeneratorMatrix.from_rates(4, [0, 0, 0], [1, 2, 3], [1.0, 1.0, 1.0])
        emb = laplacian_eigenmap(q, 2)
        assert emb.eigenvalues[0] == pytest.approx(emb.eigenvalues[1])
        y = emb.coords
        np.testing.assert_allclose(y[0], 0.0, atol=1e-12)
        radii = np.linalg.norm(y[1:], axis=1)
        np.testing.assert_allclose(radii, radii[0], rtol=1e-10)
        sides = [np.linalg.norm(y[i] - y[j]) for i, j in [(1, 2), (1, 3), (2, 3)]]
        np.testing.assert_allclose(sides, sides[0], rtol=1e-10)

    def test_center_spacing_nearly_uniform(self):
        q, labels = grid_walk((30,))
        emb = laplacian_eigenmap(q, 1, "combinatorial")
        cv, count = center_spacing_cv(emb.coords, labels, (30,))
        assert count >= 5 and cv < 0.05

    def test_errors(self):
        q = GeneratorMatrix.from_rates(4, [0, 2], [1, 3], [1.0, 1.0])
        with pytest.raises(DisconnectedGraphError):
            laplacian_eigenmap(q, 1)
        with pytest.raises(ConfigError):
            laplacian_eigenmap(grid_walk((3,))[0], 3)
        assert laplacian_eigenmap(grid_walk((3,))[0], 2).dim == 2
        with pytest.raises(ConfigError):
            laplacian_eigenmap(grid_walk((5,))[0], 1, "weighted")


class TestEmbeddingType:
    def test_validation(self):
        with pytest.raises(ConfigError):
            Embedding(np.zeros((3, 3)), np.ones(3), "diffusion_map")
        with pytest.raises(ConfigError):
            Embedding(np.array([[np.nan], [0.0]]), np.ones(1), "diffusion_map")
        e = Embedding(np.array([[0.0, 0.0], [3.0, 4.0], [1.0, 1.0]]), [1, 2], "laplacian_eigenmap")
        assert e.bbox_diagonal() == 5.0
        with pytest.raises(ValueError):
            e.coords[0, 0] = 1.0

    def test_unknown_method(self):
        with pytest.raises(ConfigError):
            embed(grid_walk((4,))[0], 1, "isomap")


@given(st.integers(3, 12), st.integers(0, 1000))
def test_embedding_columns_finite_and_unit(n, seed):
    q = random_generator(n, seed=seed)
    emb = embed(q, 1)
    assert np.all(np.isfinite(emb.coords))
    assert np.linalg.norm(emb.coords[:, 0]) == pytest.approx(1.0)
