import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvcca import cca
from mvcca.exceptions import ConfigError, DataError, TensorSizeError


def _views(rng, dims, n=200):
    return [rng.standard_normal((d, n)) for d in dims]


class TestCca2:
    def test_identical_views(self, rng):
        X = rng.standard_normal((3, 100))
        model = cca.fit_cca2(X, X.copy(), 3)
        assert abs(model.objective - 3.0) < 1e-4

    def test_independent_views(self, rng):
        X1, X2 = _views(rng, (5, 5), n=2000)
        assert np.all(cca.fit_cca2(X1, X2, 5).extra["correlations"] < 0.3)

    def test_scalar_views_give_pearson(self, rng):
        x = 10 * rng.standard_normal(200)
        y = 0.6 * x + 10 * rng.standard_normal(200)
        rho = cca.fit_cca2(x[None], y[None], 1).objective
        assert abs(rho - abs(np.corrcoef(x, y)[0, 1])) < 1e-8

    def test_m_too_large(self, rng):
        X1, X2 = _views(rng, (2, 3))
        with pytest.raises(ConfigError, match="m"):
            cca.fit_cca2(X1, X2, 3)

    def test_sample_mismatch(self, rng):
        with pytest.raises(DataError):
            cca.fit_cca2(rng.standard_normal((2, 10)), rng.standard_normal((2, 11)), 1)


class TestMcca:
    def test_identical_views(self, rng):
        X = 10 * rng.standard_normal((3, 100))
        model = cca.fit_mcca_sumcor([X, X.copy(), X.copy()], 3)
        np.testing.assert_allclose(model.extra["eigenvalues"], 3.0, atol=1e-6)

    def test_two_views_match_cca2(self, rng):
        X1, X2 = _views(rng, (4, 5))
        P = cca.fit_mcca_sumcor([X1, X2], 3).projections
        Q = cca.fit_cca2(X1, X2, 3).projections
        for A, B in zip(P, Q):
            qa, _ = np.linalg.qr(A)
            qb, _ = np.linalg.qr(B)
            cosines = np.linalg.svd(qa.T @ qb, compute_uv=False)
            assert np.max(np.arccos(np.clip(cosines, -1, 1))) < 1e-6

    def test_summed_constraint(self, rng):
        views = _views(rng, (3, 4, 5))
        model = cca.fit_mcca_sumcor(views, 4)
        total = sum(P.T @ (Xc @ Xc.T + model.eps * np.eye(len(mu))) @ P
                    for P, Xc, mu in zip(model.projections,
                                         [X - X.mean(1, keepdims=True) for X in views],
                                         model.means))
        assert np.linalg.norm(total - np.eye(4)) <= 1e-6

    def test_m_too_large(self, rng):
        with pytest.raises(ConfigError):
            cca.fit_mcca_sumcor(_views(rng, (2, 2)), 5)


class TestGcca:
    def test_identical_views(self, rng):
        X = 10 * rng.standard_normal((3, 100))
        model = cca.fit_gcca([X, X.copy()], 3)
        np.testing.assert_allclose(model.eigenvalues, 2.0, atol=1e-6)

    def test_orthonormal_g(self, rng):
        G = cca.fit_gcca(_views(rng, (3, 4, 2)), 5).G
        assert np.linalg.norm(G @ G.T - np.eye(5)) <= 1e-8

    def test_projection_solves_ridge_least_squares(self, rng):
        views = _views(rng, (3, 4))
        model = cca.fit_gcca(views, 2)
        for X, P, mu in zip(views, model.projections, model.means):
            Xc = X - mu[:, None]
            grad = (Xc @ Xc.T + model.eps * np.eye(len(mu))) @ P - Xc @ model.G.T
            assert np.linalg.norm(grad) < 1e-6

    def test_more_components_than_rank(self, rng):
        model = cca.fit_gcca(_views(rng, (1, 1), n=10), 4)
        assert np.linalg.norm(model.G @ model.G.T - np.eye(4)) <= 1e-8

    def test_n_below_m(self, rng):
        with pytest.raises(ConfigError):
            cca.fit_gcca(_views(rng, (2, 2), n=3), 4)


class TestTcca:
    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_two_views_match_cca2(self, seed):
        rng = np.random.default_rng(seed)
        d1, d2 = rng.integers(1, 11, size=2)
        m = int(rng.integers(1, min(d1, d2) + 1))
        X1, X2 = rng.standard_normal((d1, 200)), rng.standard_normal((d2, 200))
        X2[: min(d1, d2)] += X1[: min(d1, d2)]
        ref = cca.fit_cca2(X1, X2, m).objective
        got = cca.fit_tcca([X1, X2], m, als_opts={"tol": 1e-14, "max_iter": 2000}).objective
        assert abs(got - ref) <= 1e-6 * abs(ref)

    def test_shared_signal_beats_shuffle(self, rng):
        s = rng.exponential(size=300)
        s -= s.mean()
        views = [np.outer(rng.standard_normal(3), s) + 0.1 * rng.standard_normal((3, 300))
                 for _ in range(3)]
        rho = cca.tcc_objective(cca.fit_tcca(views, 1).transform(views))[1][0]
        shuffled = [views[0], views[1][:, rng.permutation(300)], views[2][:, rng.permutation(300)]]
        rho_shuf = cca.tcc_objective(cca.fit_tcca(shuffled, 1).transform(shuffled))[1][0]
        assert rho > rho_shuf

    def test_unit_norm_factors(self, rng):
        model = cca.fit_tcca(_views(rng, (3, 4, 2)), 2)
        for U in model.extra["cp"].factors:
            np.testing.assert_allclose(np.linalg.norm(U, axis=0), 1.0, atol=1e-8)
        for P, W, U in zip(model.projections, model.extra["whiteners"], model.extra["cp"].factors):
            np.testing.assert_allclose(P, W @ U)

    def test_backends_agree(self, rng):
        views = _views(rng, (3, 4, 2), n=50)
        a = cca.fit_tcca(views, 2, backend="dense", als_opts={"tol": 1e-12, "max_iter": 500})
        b = cca.fit_tcca(views, 2, backend="implicit", als_opts={"tol": 1e-12, "max_iter": 500})
        np.testing.assert_allclose(a.extra["cp"].weights, b.extra["cp"].weights, rtol=1e-6)

    def test_cap_suggests_pca(self, rng):
        with pytest.raises(TensorSizeError, match="PCA"):
            cca.fit_tcca(_views(rng, (10, 10, 10), n=20), 2, max_elements=999)


class TestTransform:
    def test_mean_maps_to_zero(self, rng):
        views = _views(rng, (3, 4))
        model = cca.fit_cca2(*views, 2)
        for r, mu in enumerate(model.means):
            np.testing.assert_allclose(model.transform(mu[:, None], view=r), 0.0, atol=1e-14)

    def test_batch_equals_singles(self, rng):
        views = _views(rng, (3, 4, 2))
        model = cca.fit_gcca(views, 2)
        batch = model.transform(views)
        for i in range(5):
            single = model.transform([X[:, i:i + 1] for X in views])
            for b, s in zip(batch, single):
                np.testing.assert_allclose(s[:, 0], b[:, i], atol=1e-13)
        assert all(Z.shape[0] == 2 for Z in batch)

    def test_dimension_mismatch(self, rng):
        model = cca.fit_cca2(*_views(rng, (3, 4)), 2)
        with pytest.raises(DataError):
            model.transform(rng.standard_normal((5, 3)), view=0)


class TestObjectives:
    def test_all_ones(self):
        assert cca.tcc_objective([np.ones((1, 7))] * 3)[0] == 7.0

    def test_two_views_trace(self, rng):
        Z1, Z2 = rng.standard_normal((2, 3, 20))
        assert abs(cca.tcc_objective([Z1, Z2])[0] - np.trace(Z1 @ Z2.T)) < 1e-10

    def test_brute_force(self, rng):
        Z = rng.standard_normal((3, 2, 6))
        per = [sum(Z[0, l, i] * Z[1, l, i] * Z[2, l, i] for i in range(6)) for l in range(2)]
        rho, got = cca.tcc_objective(list(Z))
        np.testing.assert_allclose(got, per, atol=1e-14)
        assert abs(rho - sum(per)) < 1e-14

    def test_shape_mismatch(self, rng):
        with pytest.raises(DataError):
            cca.tcc_objective([np.ones((2, 3)), np.ones((2, 4))])

    def test_sumcor_small_cases(self, rng):
        Z = rng.standard_normal((2, 5))
        assert abs(cca.sumcor_objective([Z]) - np.sum(Z * Z)) < 1e-12
        assert abs(cca.sumcor_objective([Z, -Z])) < 1e-12

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.integers(1, 5))
    def test_pairwise_identities(self, seed, k):
        Z = list(np.random.default_rng(seed).standard_normal((k, 3, 8)))
        pair = cca.pairwise_loss(Z)
        energy = sum(np.sum(z * z) for z in Z)
        assert abs(pair - (2 * k * energy - 2 * cca.sumcor_objective(Z))) < 1e-8
        assert abs(pair - 2 * k * cca.maxvar_loss(Z)) < 1e-8

    def test_lscca_identity_at_mcca_solution(self, rng):
        views = _views(rng, (3, 4, 2))
        model = cca.fit_mcca_sumcor(views, 2, eps=0.0)
        Z = model.transform(views)
        assert abs(sum(np.trace(z @ z.T) for z in Z) - 2.0) < 1e-8
        pair = cca.pairwise_loss(Z)
        assert abs(pair - (2 * 3 * 2.0 - 2 * cca.sumcor_objective(Z))) < 1e-8
