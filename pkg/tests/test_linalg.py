import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import central_diff, random_spd, rel_err
from mvcca.exceptions import DataError, SingularCovarianceError
from mvcca.linalg import (center_columns, frechet_inv_sqrt, inv_sqrt_sym, pca_fit, svd,
                          sym_eig)


class TestCenterColumns:
    def test_small_example(self):
        Xc, mean = center_columns(np.array([[1.0, 3.0], [2.0, 4.0]]))
        np.testing.assert_array_equal(Xc, [[-1, 1], [-1, 1]])
        np.testing.assert_array_equal(mean, [2, 3])

    def test_single_column(self):
        x = np.array([[5.0], [-2.0], [7.0]])
        Xc, mean = center_columns(x)
        np.testing.assert_array_equal(Xc, np.zeros((3, 1)))
        np.testing.assert_array_equal(mean, x[:, 0])

    def test_row_sums_vanish(self, rng):
        Xc, _ = center_columns(rng.standard_normal((5, 50)) + 3.0)
        assert np.all(np.abs(Xc.sum(axis=1)) < 1e-10)

    def test_idempotent(self, rng):
        Xc, _ = center_columns(rng.standard_normal((4, 30)) * 10 + 1)
        np.testing.assert_allclose(center_columns(Xc)[0], Xc, atol=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(DataError):
            center_columns(np.zeros((3, 0)))


class TestSymEig:
    def test_diagonal(self):
        w, V = sym_eig(np.diag([2.0, 1.0]))
        np.testing.assert_array_equal(w, [2, 1])
        np.testing.assert_array_equal(V, np.eye(2))

    def test_swap_matrix(self):
        w, _ = sym_eig(np.array([[0.0, 1.0], [1.0, 0.0]]))
        np.testing.assert_allclose(w, [1, -1], atol=1e-15)

    def test_random_reconstruction(self, rng):
        A = rng.standard_normal((8, 8))
        S = A + A.T
        w, V = sym_eig(S)
        assert np.all(np.diff(w) <= 0)
        assert np.linalg.norm(V.T @ V - np.eye(8)) <= 1e-10 * 8
        assert np.linalg.norm(V @ np.diag(w) @ V.T - S) / np.linalg.norm(S) < 1e-8

    def test_sign_convention(self, rng):
        _, V = sym_eig(random_spd(rng, 6))
        idx = np.argmax(np.abs(V), axis=0)
        assert np.all(V[idx, np.arange(6)] > 0)

    def test_non_square_rejected(self):
        with pytest.raises(DataError):
            sym_eig(np.zeros((2, 3)))


class TestSvd:
    def test_identity(self):
        np.testing.assert_allclose(svd(np.eye(3)).s, [1, 1, 1])

    def test_rank_one(self):
        a, b = np.array([1.0, 2.0, 2.0]), np.array([3.0, 4.0])
        s = svd(np.outer(a, b)).s
        np.testing.assert_allclose(s[0], 15.0)
        assert s[1] < 1e-12

    def test_random_reconstruction(self, rng):
        A = rng.standard_normal((6, 4))
        U, s, V = svd(A)
        assert np.all(np.diff(s) <= 0) and np.all(s >= 0)
        np.testing.assert_allclose(U.T @ U, np.eye(4), atol=1e-12)
        np.testing.assert_allclose(V.T @ V, np.eye(4), atol=1e-12)
        assert np.linalg.norm(U @ np.diag(s) @ V.T - A) / np.linalg.norm(A) < 1e-8


class TestInvSqrt:
    def test_identity(self):
        np.testing.assert_allclose(inv_sqrt_sym(np.eye(3), 0.0), np.eye(3), atol=1e-15)

    def test_diagonal(self):
        np.testing.assert_allclose(inv_sqrt_sym(np.diag([4.0, 9.0]), 0.0),
                                   np.diag([0.5, 1 / 3]), atol=1e-15)

    def test_random_spd(self, rng):
        S = random_spd(rng, 10)
        R = inv_sqrt_sym(S, 1e-4)
        Sr = S + 1e-4 * np.eye(10)
        assert np.linalg.norm(R @ R @ Sr - np.eye(10)) < 1e-6
        np.testing.assert_array_equal(R, R.T)
        assert np.linalg.norm(R @ Sr - Sr @ R) <= 1e-8 * np.linalg.norm(Sr)

    def test_singular_names_eigenvalue(self):
        with pytest.raises(SingularCovarianceError, match="eigenvalue"):
            inv_sqrt_sym(np.diag([1.0, -1.0]), 1e-4)

    def test_rank_deficient_cured_by_ridge(self):
        R = inv_sqrt_sym(np.diag([1.0, 0.0]), 1e-4)
        np.testing.assert_allclose(np.diag(R), [1 / np.sqrt(1 + 1e-4), 100.0])


class TestFrechetInvSqrt:
    def test_identity_base(self, rng):
        E = rng.standard_normal((3, 3))
        E = E + E.T
        np.testing.assert_allclose(frechet_inv_sqrt(np.eye(3), E, 0.0), -0.5 * E, atol=1e-14)

    def test_diagonal(self):
        lam = np.array([1.0, 4.0, 9.0])
        dS = np.diag([1.0, -2.0, 0.5])
        expected = np.diag(-0.5 * lam ** -1.5 * np.diag(dS))
        np.testing.assert_allclose(frechet_inv_sqrt(np.diag(lam), dS, 0.0), expected,
                                   atol=1e-14)

    def test_matches_finite_difference(self, rng):
        S = random_spd(rng, 5)
        D = rng.standard_normal((5, 5))
        D = D + D.T
        h = 1e-5
        fd = (inv_sqrt_sym(S + h * D, 1e-4) - inv_sqrt_sym(S - h * D, 1e-4)) / (2 * h)
        assert rel_err(frechet_inv_sqrt(S, D, 1e-4), fd) < 1e-5

    def test_degenerate_spectrum(self):
        # repeated eigenvalues take the derivative limit
        S = np.diag([2.0, 2.0, 5.0])
        dS = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
        out = frechet_inv_sqrt(S, dS, 0.0)
        np.testing.assert_allclose(out, -0.5 * 2.0 ** -1.5 * dS, atol=1e-15)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.floats(-2, 2), st.floats(-2, 2))
    def test_linear_in_direction(self, seed, a, b):
        rng = np.random.default_rng(seed)
        S = random_spd(rng, 4)
        D1, D2 = (M + M.T for M in rng.standard_normal((2, 4, 4)))
        lhs = frechet_inv_sqrt(S, a * D1 + b * D2)
        rhs = a * frechet_inv_sqrt(S, D1) + b * frechet_inv_sqrt(S, D2)
        assert np.linalg.norm(lhs - rhs) <= 1e-10 * max(np.linalg.norm(rhs), 1e-12)


class TestPca:
    def test_line_data(self, rng):
        t = rng.standard_normal(100)
        X, _ = center_columns(np.outer([1.0, 2.0, -1.0], t))
        assert pca_fit(X, energy=0.95).shape == (1, 3)

    def test_max_dim_cap(self, rng):
        X, _ = center_columns(rng.standard_normal((100, 300)))
        P = pca_fit(X, max_dim=20)
        assert P.shape == (20, 100)
        np.testing.assert_allclose(P @ P.T, np.eye(20), atol=1e-10)

    def test_isotropic_keeps_both(self, rng):
        X, _ = center_columns(rng.standard_normal((2, 2000)))
        assert pca_fit(X, energy=0.95).shape[0] == 2

    def test_wide_data_uses_sample_gram(self, rng):
        # d > n path must span the same subspace as the direct route
        X, _ = center_columns(rng.standard_normal((40, 15)))
        P = pca_fit(X, max_dim=5)
        U = np.linalg.svd(X)[0][:, :5]
        np.testing.assert_allclose(np.abs(P @ U), np.eye(5), atol=1e-8)

    def test_zero_data_rejected(self):
        with pytest.raises(DataError):
            pca_fit(np.zeros((3, 10)), energy=0.9)
