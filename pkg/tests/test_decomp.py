import math
import warnings

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from epca.decomp import (
    FitConfig,
    GammaRangeWarning,
    component_ev,
    diagonal_baseline_pve,
    diagonal_center,
    optimal_center,
    prs,
    pve,
    residual_sq,
    sca,
    sma,
    sparse_coding,
)
from epca.matcore import RankDeficientError, polar, truncated_svd
from epca.rotate import varimax_rotate
from epca.shrink import soft_threshold
from epca.simgen import accuracy, assign_clusters, four_block_sbm, gen_lowrank
from oracles import column_match, jacobi_svd, random_orthogonal, random_stiefel, sparse_orthonormal


def planted(seed, n=40, p=20, k=2, sigma=(5.0, 3.0)):
    rng = np.random.default_rng(seed)
    V = sparse_orthonormal(rng, p, k)
    U = random_stiefel(rng, n, k)
    return (U * np.asarray(sigma)) @ V.T, U, V


def assert_residual_identity(X, fit, rel=1e-8):
    X = X.toarray() if sp.issparse(X) else X
    total = (X * X).sum()
    lhs = residual_sq(X, fit.Z, fit.B, fit.Y)
    rhs = total - (fit.B**2).sum()
    assert abs(lhs - rhs) <= rel * total
    np.testing.assert_allclose(fit.B, fit.Z.T @ X @ fit.Y, atol=1e-8, rtol=0)


class TestPrs:
    def test_identity(self):
        out = prs(np.eye(3), 3.0)
        assert np.abs(out).sum() == pytest.approx(3.0)
        np.testing.assert_allclose(np.abs(out), np.eye(3)[:, np.argmax(np.abs(out), axis=0)], atol=1e-12)

    def test_plant_and_recover(self):
        rng = np.random.default_rng(0)
        V = sparse_orthonormal(rng, 30, 3)
        A = (V * [4.0, 2.0, 1.0]) @ random_orthogonal(rng, 3).T
        out = prs(A, np.abs(V).sum())
        assert column_match(out, V).min() >= 0.99

    def test_inactive_at_upper_bound(self):
        A = np.random.default_rng(1).standard_normal((50, 4))
        out = prs(A, 4 * math.sqrt(50))
        np.testing.assert_allclose(out.T @ out, np.eye(4), atol=1e-8)

    def test_rank_deficient(self):
        A = np.ones((5, 2))
        with pytest.raises(RankDeficientError):
            prs(A, 2.0)

    def test_budget(self):
        A = np.random.default_rng(2).standard_normal((20, 3))
        assert np.abs(prs(A, 5.0)).sum() <= 5.0 * (1 + 1e-10)


class TestSca:
    def test_exact_plant(self):
        X, U, V = planted(0)
        fit = sca(X, FitConfig(k=2, gamma=np.abs(V).sum()))
        assert column_match(fit.Y, V).min() >= 0.99
        assert fit.pve >= 0.999
        assert fit.converged

    @pytest.mark.parametrize("seed", range(4))
    def test_inactive_matches_svd(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((25, 15))
        k = 3
        fit = sca(X, FitConfig(k=k, gamma=k * math.sqrt(15)))
        _, s, _ = jacobi_svd(X)
        target = math.sqrt((s[:k] ** 2).sum())
        assert fit.objective_trace[-1] == pytest.approx(target, rel=1e-6)
        assert_residual_identity(X, fit)

    def test_diagonal_baseline_small(self):
        for seed in range(3):
            inst = gen_lowrank(seed=seed, k=4)
            fit = sca(inst.X, FitConfig(k=4, gamma=2.5 * 4))
            assert fit.pve >= diagonal_baseline_pve(inst.X, fit.Z, fit.Y) - 1e-12

    def test_result_contract(self):
        inst = gen_lowrank(n=60, p=40, k=4, seed=3)
        fit = sca(inst.X, FitConfig(k=4, gamma=8.0))
        ev = fit.component_ev
        assert all(b <= a for a, b in zip(ev, ev[1:]))
        np.testing.assert_allclose(ev, [component_ev(inst.X, fit.Y[:, j]) for j in range(4)], rtol=1e-12)
        np.testing.assert_allclose(fit.B, fit.Z.T @ inst.X @ fit.Y, atol=1e-8)
        assert np.all(np.isfinite(fit.objective_trace))
        assert 0.0 <= fit.pve <= 1.0
        assert np.abs(fit.Y).sum() <= 8.0 * (1 + 1e-9)
        for j in range(4):
            col = fit.Y[:, j]
            assert col[np.argmax(np.abs(col))] > 0
        # Z is the polar factor of X Y after reordering.
        np.testing.assert_allclose(fit.Z, polar(inst.X @ fit.Y), atol=1e-10)

    def test_z_update_monotone_and_shrink_bound(self):
        inst = gen_lowrank(n=60, p=50, k=4, seed=4)
        fit = sca(inst.X, FitConfig(k=4, gamma=7.0))
        for st_ in fit.diagnostics["steps"]:
            assert st_["objective_after_z"] >= st_["objective_after_y"] - 1e-10
            drop = st_["objective_unshrunk"] - st_["objective_after_y"]
            assert drop <= st_["shrink_bound"] + 1e-10

    def test_deterministic(self):
        inst = gen_lowrank(n=30, p=30, k=3, seed=5)
        a = sca(inst.X, FitConfig(k=3, gamma=6.0))
        b = sca(inst.X, FitConfig(k=3, gamma=6.0))
        assert np.array_equal(a.Y, b.Y) and np.array_equal(a.Z, b.Z) and np.array_equal(a.B, b.B)
        assert a.objective_trace == b.objective_trace

    def test_sparse_input(self):
        X, _, V = planted(6, n=60, p=30)
        dense = sca(X, FitConfig(k=2, gamma=np.abs(V).sum()))
        sparse = sca(sp.csr_matrix(X), FitConfig(k=2, gamma=np.abs(V).sum()))
        np.testing.assert_allclose(sparse.Y, dense.Y, atol=1e-8)

    def test_absmin_rotation(self):
        X, _, V = planted(7)
        fit = sca(X, FitConfig(k=2, gamma=np.abs(V).sum(), rotation="absmin"))
        assert column_match(fit.Y, V).min() >= 0.9

    def test_zero_columns_reported(self):
        # A 4-sparse and a 100-spread loading: the budget wipes out the spread one.
        V = np.zeros((104, 2))
        V[:4, 0] = 0.5
        V[4:, 1] = 0.1
        X = (random_stiefel(np.random.default_rng(0), 10, 2) * [10.0, 1.0]) @ V.T
        with pytest.warns(GammaRangeWarning):
            fit = sca(X, FitConfig(k=2, gamma=1.5))
        assert fit.zero_columns == (1,)
        assert np.all(fit.Y[:, 1] == 0)
        assert np.abs(fit.Y).sum() == pytest.approx(1.5)
        assert fit.diagnostics["pve_rank_deficient"]

    def test_to_dict(self):
        X, _, _ = planted(8)
        d = sca(X, FitConfig(k=2)).to_dict()
        for key in ("loadings", "scores_basis", "center", "component_ev", "pve", "iterations",
                    "converged", "objective_trace", "zero_columns", "config"):
            assert key in d
        assert d["config"]["gamma"] == pytest.approx(math.sqrt(20 * 2))

    def test_k_out_of_range(self):
        with pytest.raises(ValueError):
            sca(np.ones((30, 20)), FitConfig(k=21))

    def test_zero_matrix(self):
        with pytest.raises(ValueError):
            sca(np.zeros((5, 5)), FitConfig(k=1))


def z_first_fit(X, k, gamma, tol=1e-5, max_iter=1000):
    """Alternation order swapped: Z <- polar(X Y) before Y <- prs(X^T Z)."""
    svd = truncated_svd(X, k)
    Y = svd.right
    prev = None
    for _ in range(max_iter):
        Z = polar(X @ Y)
        Yt = polar(X.T @ Z)
        Y = soft_threshold(varimax_rotate(Yt).rotated, gamma).matrix
        obj = np.linalg.norm(Z.T @ X @ Y)
        if prev is not None and abs(obj - prev) <= tol * max(1.0, prev):
            break
        prev = obj
    return Z, Y, obj


class TestUpdateOrder:
    def test_inactive_same_optimum(self):
        X = np.random.default_rng(0).standard_normal((20, 12))
        k = 3
        fit = sca(X, FitConfig(k=k, gamma=k * math.sqrt(12)))
        _, _, obj = z_first_fit(X, k, k * math.sqrt(12))
        assert fit.objective_trace[-1] == pytest.approx(obj, rel=1e-6)

    def test_planted_same_subspace(self):
        X, _, V = planted(1, n=50, p=30)
        g = np.abs(V).sum()
        fit = sca(X, FitConfig(k=2, gamma=g))
        _, Y, obj = z_first_fit(X, 2, g)
        assert column_match(Y, V).min() >= 0.99
        assert fit.objective_trace[-1] == pytest.approx(obj, rel=1e-4)


class TestSma:
    @pytest.mark.parametrize("seed", range(3))
    def test_inactive_matches_svd(self, seed):
        rng = np.random.default_rng(seed)
        n, p, k = 18, 14, 3
        X = rng.standard_normal((n, p))
        fit = sma(X, FitConfig(k=k, gamma=k * math.sqrt(p), gamma_z=k * math.sqrt(n)))
        s = np.linalg.svd(X, compute_uv=False)
        assert fit.objective_trace[-1] == pytest.approx(math.sqrt((s[:k] ** 2).sum()), rel=1e-6)
        assert_residual_identity(X, fit)

    def test_sbm_clusters(self):
        inst = four_block_sbm(seed=0, expected_degree=45)
        fit = sma(inst.adjacency, FitConfig(k=4, gamma=48.0, gamma_z=48.0))
        assert accuracy(assign_clusters(fit.Y), inst.labels, 4) >= 0.7
        assert accuracy(assign_clusters(fit.Z), inst.labels, 4) >= 0.7
        np.testing.assert_allclose(fit.B, fit.Z.T @ (inst.adjacency @ fit.Y), atol=1e-8)

    def test_zero_matrix(self):
        with pytest.raises(ValueError):
            sma(np.zeros((4, 4)), FitConfig(k=1))

    def test_both_budgets_respected(self):
        inst = gen_lowrank(n=40, p=30, k=3, seed=2)
        fit = sma(inst.X, FitConfig(k=3, gamma=6.0, gamma_z=7.0))
        assert np.abs(fit.Y).sum() <= 6.0 * (1 + 1e-9)
        assert np.abs(fit.Z).sum() <= 7.0 * (1 + 1e-9)
        assert fit.gamma_z == 7.0
        assert "gamma_z" in fit.to_dict()

    def test_deterministic(self):
        inst = gen_lowrank(n=30, p=20, k=2, seed=3)
        a = sma(inst.X, FitConfig(k=2, gamma=4.0, gamma_z=5.0))
        b = sma(inst.X, FitConfig(k=2, gamma=4.0, gamma_z=5.0))
        assert np.array_equal(a.Y, b.Y) and np.array_equal(a.Z, b.Z)


class TestSparseCoding:
    def test_orthogonal_sparse_rows(self):
        rng = np.random.default_rng(0)
        rows = sparse_orthonormal(rng, 30, 3).T * np.array([[5.0], [3.0], [2.0]])
        fit = sparse_coding(rows, FitConfig(k=3, gamma=3 * math.sqrt(3)))
        # Scores recover the identity mixing up to signed permutation.
        np.testing.assert_allclose(np.abs(fit.scores), np.eye(3)[:, np.argmax(np.abs(fit.scores), axis=0)],
                                   atol=1e-8)
        np.testing.assert_allclose(fit.scores @ fit.basis, rows, atol=1e-8)

    def test_transpose_consistency(self):
        X = np.random.default_rng(1).standard_normal((12, 30))
        cfg = FitConfig(k=2, gamma=3.0)
        fit = sparse_coding(X, cfg)
        ref = sca(X.T, FitConfig(k=2, gamma=3.0, kaiser_normalize=True))
        assert np.array_equal(fit.scores, ref.loadings)
        assert np.array_equal(fit.basis, ref.center.T @ ref.scores_basis.T)
        assert fit.transposed_fit.config.kaiser_normalize is True

    def test_bss(self):
        from epca.simgen import bss_instance, match_columns

        X, S, _ = bss_instance(seed=0)
        fit = sparse_coding(X, FitConfig(k=3))
        assert match_columns(fit.scores, S).min() >= 0.95


class TestCenters:
    def test_orthonormal_optimal(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((8, 6))
        Z, Y = random_stiefel(rng, 8, 3), random_stiefel(rng, 6, 3)
        np.testing.assert_allclose(optimal_center(X, Z, Y), Z.T @ X @ Y, atol=1e-12)

    def test_recover_center(self):
        rng = np.random.default_rng(1)
        Z, Y = rng.standard_normal((10, 3)), rng.standard_normal((7, 3))
        B0 = rng.standard_normal((3, 3))
        np.testing.assert_allclose(optimal_center(Z @ B0 @ Y.T, Z, Y), B0, atol=1e-10)

    def test_rank_deficient_y(self):
        rng = np.random.default_rng(2)
        X = rng.standard_normal((9, 6))
        Z = random_stiefel(rng, 9, 3)
        Y = random_stiefel(rng, 6, 3)
        Y[:, 2] = Y[:, 0]
        B = optimal_center(X, Z, Y)
        assert np.all(np.isfinite(B))
        best = residual_sq(X, Z, B, Y)
        for _ in range(50):
            d = rng.standard_normal(3) * 3
            assert best <= residual_sq(X, Z, d, Y) + 1e-10

    def test_diagonal_recover(self):
        rng = np.random.default_rng(3)
        Z, Y = random_stiefel(rng, 8, 2), random_stiefel(rng, 5, 2)
        X = Z @ np.diag([3.0, 1.0]) @ Y.T
        np.testing.assert_allclose(diagonal_center(X, Z, Y), [3.0, 1.0], atol=1e-12)

    def test_diagonal_equality_case(self):
        rng = np.random.default_rng(4)
        Z, Y = random_stiefel(rng, 8, 3), random_stiefel(rng, 6, 3)
        X = Z @ np.diag([2.0, -1.0, 0.5]) @ Y.T + 0.0
        ob = optimal_center(X, Z, Y)
        d = diagonal_center(X, Z, Y)
        assert residual_sq(X, Z, ob, Y) == pytest.approx(residual_sq(X, Z, d, Y), abs=1e-12)

    def test_diagonal_residual_formula(self):
        rng = np.random.default_rng(5)
        X = rng.standard_normal((9, 7))
        Z, Y = random_stiefel(rng, 9, 3), random_stiefel(rng, 7, 3)
        d = diagonal_center(X, Z, Y)
        assert residual_sq(X, Z, d, Y) == pytest.approx((X**2).sum() - (d**2).sum(), rel=1e-12)

    def test_diagonal_requires_orthonormal(self):
        with pytest.raises(ValueError):
            diagonal_center(np.eye(3), 2 * np.eye(3)[:, :2], np.eye(3)[:, :2])

    @settings(max_examples=100, deadline=None)
    @given(st.integers(2, 30), st.integers(2, 30), st.integers(1, 5), st.integers(0, 2**32 - 1))
    def test_full_center_beats_diagonal(self, n, p, k, seed):
        k = min(k, n, p)
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((n, p))
        Z, Y = random_stiefel(rng, n, k), random_stiefel(rng, p, k)
        opt = residual_sq(X, Z, optimal_center(X, Z, Y), Y)
        assert opt <= residual_sq(X, Z, diagonal_center(X, Z, Y), Y) + 1e-10

    @settings(max_examples=60, deadline=None)
    @given(st.integers(2, 20), st.integers(2, 20), st.integers(1, 4), st.integers(0, 2**32 - 1))
    def test_residual_identity(self, n, p, k, seed):
        k = min(k, n, p)
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((n, p))
        Z, Y = random_stiefel(rng, n, k), random_stiefel(rng, p, k)
        B = Z.T @ X @ Y
        total = (X**2).sum()
        assert abs(residual_sq(X, Z, B, Y) - (total - (B**2).sum())) <= 1e-8 * total


class TestPve:
    def test_full_row_space(self):
        X = np.random.default_rng(0).standard_normal((3, 5))
        _, _, Vt = np.linalg.svd(X, full_matrices=False)
        assert pve(X, Vt.T) == pytest.approx(1.0)

    def test_top_k(self):
        X = np.random.default_rng(1).standard_normal((10, 6))
        U, s, V = jacobi_svd(X)
        assert pve(X, V[:, :2]) == pytest.approx((s[:2] ** 2).sum() / (s**2).sum(), rel=1e-12)

    def test_orthogonal(self):
        X = np.zeros((4, 3))
        X[:, 0] = 1.0
        assert pve(X, np.array([[0.0], [1.0], [0.0]])) == 0.0

    def test_zero_x(self):
        with pytest.raises(ValueError):
            pve(np.zeros((2, 2)), np.eye(2))

    def test_rank_deficient_flag(self):
        X = np.random.default_rng(2).standard_normal((5, 4))
        Y = np.zeros((4, 2))
        Y[0, 0] = Y[0, 1] = 1.0
        assert pve(X, Y) == pytest.approx(pve(X, Y[:, :1]))

    def test_rotation_invariant(self):
        rng = np.random.default_rng(3)
        X = rng.standard_normal((8, 6))
        Y = rng.standard_normal((6, 3))
        assert pve(X, Y @ random_orthogonal(rng, 3)) == pytest.approx(pve(X, Y), rel=1e-12)


class TestComponentEv:
    def test_top_singular(self):
        X = np.random.default_rng(0).standard_normal((7, 5))
        U, s, V = jacobi_svd(X)
        assert component_ev(X, V[:, 0]) == pytest.approx(s[0] ** 2, rel=1e-12)

    def test_homogeneous(self):
        rng = np.random.default_rng(1)
        X, y = rng.standard_normal((6, 4)), rng.standard_normal(4)
        assert component_ev(X, 3 * y) == pytest.approx(9 * component_ev(X, y))

    def test_brute_force(self):
        rng = np.random.default_rng(2)
        X, y = rng.standard_normal((6, 4)), rng.standard_normal(4)
        brute = sum(sum(X[i, j] * y[j] for j in range(4)) ** 2 for i in range(6))
        assert component_ev(X, y) == pytest.approx(brute, rel=1e-12)

    def test_zero(self):
        assert component_ev(np.ones((3, 2)), np.zeros(2)) == 0.0


def test_component_permutation_leaves_reconstruction():
    X, _, _ = planted(3, k=3, sigma=(5.0, 3.0, 2.0))
    fit = sca(X, FitConfig(k=3, gamma=6.0))
    rng = np.random.default_rng(0)
    P = np.eye(3)[rng.permutation(3)] * rng.choice([-1.0, 1.0], 3)
    a = fit.Z @ fit.B @ fit.Y.T
    b = (fit.Z @ P) @ (P.T @ fit.B @ P) @ (fit.Y @ P).T
    np.testing.assert_allclose(a, b, atol=1e-12)


class TestConfig:
    @pytest.mark.parametrize("kw", [
        {"k": 0}, {"k": 2, "gamma": 0.5}, {"k": 2, "gamma_z": float("nan")},
        {"k": 2, "tol": 0.0}, {"k": 2, "max_iter": 0}, {"k": 2, "rotation": "promax"},
    ])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            FitConfig(**kw)

    def test_gamma_warnings(self):
        X = np.random.default_rng(0).standard_normal((10, 9))
        with pytest.warns(GammaRangeWarning):
            sca(X, FitConfig(k=2, gamma=1.5))
        with pytest.warns(GammaRangeWarning):
            sca(X, FitConfig(k=2, gamma=7.0))
        with warnings.catch_warnings():
            warnings.simplefilter("error", GammaRangeWarning)
            sca(X, FitConfig(k=2, gamma=4.0))

    def test_default_gamma_echoed(self):
        X = np.random.default_rng(1).standard_normal((10, 9))
        fit = sca(X, FitConfig(k=2))
        assert fit.config.gamma == pytest.approx(math.sqrt(18))
        assert fit.config.kaiser_normalize is False
