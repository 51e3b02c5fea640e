"""Linear multi-view CCA: two-view CCA, SUMCOR multiset CCA, GCCA and TCCA.

All fits center each view with its training mean and use covariances
``C_rs = X_r X_s^T`` without a ``1/n`` factor. Every intra-view covariance is
ridged as ``C_rr + eps*I`` before it is inverted or square-rooted.
"""

from dataclasses import dataclass, field

import numpy as np

from . import tensor as tl
from .exceptions import ConfigError, DataError
from .linalg import DEFAULT_EPS, as_matrix, center_columns, inv_sqrt_sym, svd, sym_eig


@dataclass
class ProjectionModel:
    """Per-view training means and projection matrices ``P_r`` (d_r x m)."""

    method: str
    means: list
    projections: list
    eps: float
    objective: float
    extra: dict = field(default_factory=dict)

    @property
    def n_components(self):
        return self.projections[0].shape[1]

    @property
    def n_views(self):
        return len(self.projections)

    def transform(self, views, view=None):
        return transform(self, views, view)


@dataclass
class GccaModel:
    """GCCA fit: training common representation ``G`` (m x n) plus ``P_r``."""

    G: np.ndarray
    means: list
    projections: list
    eps: float
    eigenvalues: np.ndarray
    method: str = "gcca"

    @property
    def n_components(self):
        return self.G.shape[0]

    @property
    def n_views(self):
        return len(self.projections)

    def transform(self, views, view=None):
        return transform(self, views, view)


def _prepare(views, min_views=2):
    views = [as_matrix(X, f"view {r}") for r, X in enumerate(views)]
    if len(views) < min_views:
        raise DataError(f"need at least {min_views} views, got {len(views)}")
    n = views[0].shape[1]
    for r, X in enumerate(views):
        if X.shape[1] != n:
            raise DataError(f"view {r} has {X.shape[1]} samples, view 0 has {n}")
    centered, means = zip(*(center_columns(X) for X in views))
    return list(centered), list(means)


def _check_m(m, limit, what):
    if m < 1:
        raise ConfigError(f"must be >= 1, got {m}", "m")
    if m > limit:
        raise ConfigError(f"{m} exceeds {what} ({limit})", "m")


def fit_cca2(X1, X2, m, eps=DEFAULT_EPS):
    """Two-view CCA through the SVD of ``C11^-1/2 C12 C22^-1/2``."""
    (X1, X2), means = _prepare([X1, X2])
    _check_m(m, min(X1.shape[0], X2.shape[0]), "the smaller view dimension")
    W1 = inv_sqrt_sym(X1 @ X1.T, eps)
    W2 = inv_sqrt_sym(X2 @ X2.T, eps)
    T = W1 @ (X1 @ X2.T) @ W2
    U, s, V = svd(T)
    return ProjectionModel(
        method="cca2",
        means=means,
        projections=[W1 @ U[:, :m], W2 @ V[:, :m]],
        eps=eps,
        objective=float(s[:m].sum()),
        extra={"correlations": s[:m].copy()},
    )


def fit_mcca_sumcor(views, m, eps=DEFAULT_EPS):
    """SUMCOR multiset CCA via the block generalized eigenproblem.

    ``C P = D P Lambda`` with ``C`` the full block covariance and ``D`` its
    ridged block diagonal is reduced to the symmetric problem
    ``D^-1/2 C D^-1/2 y = lam y``; ``P = D^-1/2 Y_m`` then satisfies
    ``P^T D P = I_m`` exactly since ``Y_m`` has orthonormal columns.
    """
    views, means = _prepare(views)
    dims = [X.shape[0] for X in views]
    _check_m(m, sum(dims), "the total feature dimension")
    whiteners = [inv_sqrt_sym(X @ X.T, eps) for X in views]
    # D^-1/2 C D^-1/2 = B B^T with B stacking whitened views
    B = np.vstack([W @ X for W, X in zip(whiteners, views)])
    w, Y = sym_eig(B @ B.T)
    P = []
    start = 0
    for W, d in zip(whiteners, dims):
        P.append(W @ Y[start:start + d, :m])
        start += d
    return ProjectionModel(
        method="mcca",
        means=means,
        projections=P,
        eps=eps,
        objective=float(w[:m].sum()),
        extra={"eigenvalues": w[:m].copy()},
    )


def fit_gcca(views, m, eps=DEFAULT_EPS):
    """GCCA: ``G`` = top-m eigenvectors of ``Q = sum_r X_r^T (C_rr+eps I)^-1 X_r``."""
    views, means = _prepare(views)
    n = views[0].shape[1]
    if n < m:
        raise ConfigError(f"{m} exceeds the number of samples ({n})", "m")
    whiteners = [inv_sqrt_sym(X @ X.T, eps) for X in views]
    # Q = A A^T with A = [X_1^T W_1, ..., X_k^T W_k]
    A = np.hstack([X.T @ W for X, W in zip(views, whiteners)])
    U, s, _ = svd(A)
    if U.shape[1] < m:
        U = np.hstack([U, _complete_basis(U, m - U.shape[1])])
        s = np.concatenate([s, np.zeros(m - len(s))])
    G = U[:, :m].T.copy()
    P = [(W @ W) @ (X @ G.T) for W, X in zip(whiteners, views)]
    return GccaModel(G=G, means=means, projections=P, eps=eps,
                     eigenvalues=(s[:m] ** 2).copy())


def _complete_basis(U, count):
    # orthonormal vectors orthogonal to span(U), deterministic
    n = U.shape[0]
    basis = np.eye(n) - U @ U.T
    q, _ = np.linalg.qr(basis)
    return q[:, :count]


def fit_tcca(views, m, eps=DEFAULT_EPS, als_opts=None, backend="implicit",
             max_elements=tl.DEFAULT_MAX_ELEMENTS):
    """Tensor CCA: rank-m CP of the whitened covariance tensor.

    Parameters
    ----------
    views : list of ndarray (d_r, n)
    m : int
    eps : float
        Ridge on each intra-view covariance.
    als_opts : dict, optional
        Keyword arguments for :func:`mvcca.tensor.cp_als`.
    backend : {'implicit', 'dense'}
        ``'dense'`` materializes the covariance tensor and whitens it with
        mode products; ``'implicit'`` keeps it as a sum of outer products of
        the whitened samples, which is mathematically identical and avoids
        the ``prod(d_r)`` memory cost.
    max_elements : int
        Cap on ``prod(d_r)``, enforced for both backends.
    """
    views, means = _prepare(views)
    if m < 1:
        raise ConfigError(f"must be >= 1, got {m}", "m")
    tl.check_size([X.shape[0] for X in views], max_elements)
    whiteners = [inv_sqrt_sym(X @ X.T, eps) for X in views]
    if backend == "dense":
        M = tl.outer_accumulate(views, max_elements)
        for r, W in enumerate(whiteners):
            M = tl.mode_product(M, W, r)
    elif backend == "implicit":
        M = tl.OuterSumTensor([W @ X for W, X in zip(whiteners, views)])
    else:
        raise ConfigError(f"unknown backend {backend!r}", "backend")
    F = tl.cp_als(M, m, **(als_opts or {}))
    P = [W @ U for W, U in zip(whiteners, F.factors)]
    return ProjectionModel(
        method="tcca",
        means=means,
        projections=P,
        eps=eps,
        objective=float(F.weights.sum()),
        extra={"cp": F, "whiteners": whiteners},
    )


def transform(model, views, view=None):
    """Project views onto the canonical bases: ``Z_r = P_r^T (X_r - mean_r)``.

    ``views`` is the full list of views, or a single matrix when ``view``
    gives its index. Returns a list of ``m x n`` matrices (or one matrix).
    """
    if view is not None:
        X = as_matrix(views, f"view {view}")
        P, mean = model.projections[view], model.means[view]
        if X.shape[0] != P.shape[0]:
            raise DataError(f"view {view} has {X.shape[0]} features, model expects "
                            f"{P.shape[0]}")
        return P.T @ (X - mean[:, None])
    if len(views) != len(model.projections):
        raise DataError(f"model has {len(model.projections)} views, got {len(views)}")
    return [transform(model, X, r) for r, X in enumerate(views)]


def _check_shapes(Z):
    Z = [np.asarray(z, dtype=np.float64) for z in Z]
    for z in Z[1:]:
        if z.shape != Z[0].shape:
            raise DataError(f"projected views differ in shape: {z.shape} vs {Z[0].shape}")
    return Z


def tcc_objective(Z):
    """High-order canonical correlation: ``rho_l = sum_i prod_r z_r^l(i)``.

    Returns ``(rho, rho_l)`` with ``rho = sum_l rho_l``.
    """
    Z = _check_shapes(Z)
    prod_all = np.ones_like(Z[0])
    for z in Z:
        prod_all = prod_all * z
    per = prod_all.sum(axis=1)
    return float(per.sum()), per


def sumcor_objective(Z):
    """``sum_{r,s} tr(Z_r Z_s^T)``."""
    Z = _check_shapes(Z)
    return float(sum(np.sum(a * b) for a in Z for b in Z))


def pairwise_loss(Z):
    """``sum_{r,s} ||Z_r - Z_s||_F^2``."""
    Z = _check_shapes(Z)
    return float(sum(np.sum((a - b) ** 2) for a in Z for b in Z))


def maxvar_loss(Z):
    """``sum_r ||Z_r - mean_s Z_s||_F^2``."""
    Z = _check_shapes(Z)
    center = sum(Z) / len(Z)
    return float(sum(np.sum((z - center) ** 2) for z in Z))
