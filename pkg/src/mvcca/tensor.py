"""Dense order-k tensor algebra and rank-m CP decomposition by ALS.

Dense tensors are plain ``numpy`` arrays in C order. Matricization puts
mode ``r`` on the rows and the remaining modes, in increasing order with the
last one varying fastest, on the columns. :func:`khatri_rao` uses the same
ordering (first matrix slowest), so that for a CP tensor

    unfold(cp_reconstruct(F), r) == U_r @ diag(w) @ khatri_rao(U_s, s != r).T

A covariance tensor is a sum of per-sample outer products;
:class:`OuterSumTensor` keeps it in that factored form and supports every
operation ALS needs without ever allocating the dense array.
"""

import warnings
from dataclasses import dataclass, field
from math import prod

import numpy as np

from .exceptions import DataError, TensorSizeError

DEFAULT_MAX_ELEMENTS = 10**8


def check_size(dims, max_elements=DEFAULT_MAX_ELEMENTS):
    required = prod(int(d) for d in dims)
    if max_elements is not None and required > max_elements:
        raise TensorSizeError(dims, required, max_elements)
    return required


@dataclass
class CpFactors:
    """Weighted sum of rank-1 tensors ``sum_l w_l u_1^l o ... o u_k^l``."""

    weights: np.ndarray
    factors: list
    diagnostics: dict = field(default_factory=dict, compare=False)

    @property
    def rank(self):
        return len(self.weights)

    @property
    def dims(self):
        return tuple(U.shape[0] for U in self.factors)

    @property
    def order(self):
        return len(self.factors)

    def copy(self):
        return CpFactors(self.weights.copy(), [U.copy() for U in self.factors],
                         dict(self.diagnostics))


def _check_views(views):
    views = [np.asarray(V, dtype=np.float64) for V in views]
    if len(views) < 2:
        raise DataError("a covariance tensor needs at least two views")
    n = views[0].shape[1]
    for r, V in enumerate(views):
        if V.ndim != 2 or V.shape[1] != n:
            raise DataError(f"view {r} has shape {V.shape}, expected (d, {n})")
    return views


def khatri_rao(matrices):
    """Column-wise Kronecker product; the first matrix varies slowest."""
    matrices = [np.asarray(A, dtype=np.float64) for A in matrices]
    if not matrices:
        raise ValueError("khatri_rao needs at least one matrix")
    m = matrices[0].shape[1]
    for A in matrices:
        if A.ndim != 2 or A.shape[1] != m:
            raise DataError("khatri_rao operands must share their column count")
    out = matrices[0]
    for A in matrices[1:]:
        out = (out[:, None, :] * A[None, :, :]).reshape(-1, m)
    return out


def outer_accumulate(views, max_elements=DEFAULT_MAX_ELEMENTS):
    """Dense ``sum_i v_1^i o v_2^i o ... o v_k^i`` from k matrices (d_r x n)."""
    views = _check_views(views)
    dims = tuple(V.shape[0] for V in views)
    check_size(dims, max_elements)
    n = views[0].shape[1]
    lead = prod(dims[:-1])
    # chunk over samples so the Khatri-Rao block stays small
    chunk = max(1, min(n, 2_000_000 // max(lead, 1)))
    out = np.zeros((lead, dims[-1]))
    for start in range(0, n, chunk):
        sl = slice(start, start + chunk)
        out += khatri_rao([V[:, sl] for V in views[:-1]]) @ views[-1][:, sl].T
    return out.reshape(dims)


def mode_product(T, U, r):
    """``T x_r U``: contract mode ``r`` of ``T`` against the columns of ``U``."""
    if isinstance(T, OuterSumTensor):
        return T.mode_product(U, r)
    T = np.asarray(T, dtype=np.float64)
    U = np.asarray(U, dtype=np.float64)
    if not 0 <= r < T.ndim:
        raise IndexError(f"mode {r} out of range for order-{T.ndim} tensor")
    if U.ndim != 2 or U.shape[1] != T.shape[r]:
        raise DataError(
            f"matrix with {U.shape[1] if U.ndim == 2 else '?'} columns cannot "
            f"multiply mode {r} of size {T.shape[r]}"
        )
    return np.moveaxis(np.tensordot(U, T, axes=(1, r)), 0, r)


def unfold(T, r):
    T = np.asarray(T)
    if not 0 <= r < T.ndim:
        raise IndexError(f"mode {r} out of range for order-{T.ndim} tensor")
    return np.moveaxis(T, r, 0).reshape(T.shape[r], -1)


def fold(A, r, dims):
    dims = tuple(dims)
    rest = dims[:r] + dims[r + 1:]
    return np.moveaxis(np.asarray(A).reshape((dims[r],) + rest), 0, r)


def frob_norm(T):
    if isinstance(T, OuterSumTensor):
        return float(np.sqrt(max(T.norm_sq(), 0.0)))
    return float(np.linalg.norm(np.ravel(T)))


def cp_reconstruct(F, max_elements=DEFAULT_MAX_ELEMENTS):
    dims = F.dims
    check_size(dims, max_elements)
    if F.rank == 0:
        return np.zeros(dims)
    head = F.factors[0] * F.weights
    out = head @ khatri_rao(F.factors[1:]).T if F.order > 1 else head.sum(axis=1)
    return out.reshape(dims)


def cp_norm_sq(F):
    if F.rank == 0:
        return 0.0
    V = np.ones((F.rank, F.rank))
    for U in F.factors:
        V *= U.T @ U
    return float(F.weights @ V @ F.weights)


class OuterSumTensor:
    """The tensor ``sum_i y_1^i o ... o y_k^i`` kept as its k sample matrices.

    Parameters
    ----------
    views : list of ndarray (d_r, n)
        Column ``i`` of view ``r`` is the mode-``r`` vector of sample ``i``.
    """

    def __init__(self, views):
        self.views = _check_views(views)
        self._grams = None

    @property
    def dims(self):
        return tuple(V.shape[0] for V in self.views)

    @property
    def shape(self):
        return self.dims

    @property
    def ndim(self):
        return len(self.views)

    @property
    def n_samples(self):
        return self.views[0].shape[1]

    def sample_grams(self):
        if self._grams is None:
            self._grams = [V.T @ V for V in self.views]
        return self._grams

    def norm_sq(self):
        H = np.ones((self.n_samples, self.n_samples))
        for G in self.sample_grams():
            H *= G
        return float(H.sum())

    def mode_product(self, U, r):
        U = np.asarray(U, dtype=np.float64)
        if not 0 <= r < self.ndim:
            raise IndexError(f"mode {r} out of range for order-{self.ndim} tensor")
        if U.ndim != 2 or U.shape[1] != self.dims[r]:
            raise DataError(f"matrix of shape {U.shape} cannot multiply mode {r}")
        views = list(self.views)
        views[r] = U @ views[r]
        return OuterSumTensor(views)

    def projections(self, factors):
        """``U_r^T Y_r`` for every mode (rank x n each)."""
        return [U.T @ V for U, V in zip(factors, self.views)]

    def mttkrp(self, factors, r, projections=None):
        A = self.projections(factors) if projections is None else projections
        prod_other = np.ones_like(A[0])
        for s, As in enumerate(A):
            if s != r:
                prod_other = prod_other * As
        return self.views[r] @ prod_other.T

    def inner_cp(self, F):
        A = self.projections(F.factors)
        prod_all = np.ones_like(A[0])
        for As in A:
            prod_all = prod_all * As
        return float(F.weights @ prod_all.sum(axis=1))

    def unfold_gram(self, r):
        """``unfold(T, r) @ unfold(T, r).T`` without forming the tensor."""
        H = np.ones((self.n_samples, self.n_samples))
        for s, G in enumerate(self.sample_grams()):
            if s != r:
                H *= G
        return self.views[r] @ H @ self.views[r].T

    def to_dense(self, max_elements=DEFAULT_MAX_ELEMENTS):
        return outer_accumulate(self.views, max_elements)


def _dense_mttkrp(T, factors, r):
    others = [U for s, U in enumerate(factors) if s != r]
    return unfold(T, r) @ khatri_rao(others)


def _unit_columns(A):
    norms = np.linalg.norm(A, axis=0)
    safe = np.where(norms > 0, norms, 1.0)
    return A / safe, norms


def _init_factors(T, m, init, rng):
    dims = T.dims if isinstance(T, OuterSumTensor) else T.shape
    if isinstance(init, CpFactors):
        if init.rank != m or init.dims != tuple(dims):
            raise DataError("warm-start factors do not match the tensor")
        return [_unit_columns(U.copy())[0] for U in init.factors]
    if init not in ("random", "hosvd"):
        raise ValueError(f"unknown init {init!r}")
    factors = [rng.standard_normal((d, m)) for d in dims]
    if init == "hosvd":
        for r, d in enumerate(dims):
            gram = T.unfold_gram(r) if isinstance(T, OuterSumTensor) else (
                unfold(T, r) @ unfold(T, r).T)
            w, V = np.linalg.eigh(0.5 * (gram + gram.T))
            V = V[:, np.argsort(-w, kind="stable")]
            q = min(d, m)
            factors[r][:, :q] = V[:, :q]
    return [_unit_columns(U)[0] for U in factors]


def _solve_normal(V, B):
    """Solve ``A V = B`` for symmetric PSD ``V``; returns (A, ridge)."""
    try:
        L = np.linalg.cholesky(V)
        ridge = 0.0
    except np.linalg.LinAlgError:
        ridge = 1e-12 * max(np.trace(V), np.finfo(float).tiny)
        L = np.linalg.cholesky(V + ridge * np.eye(len(V)))
    Z = np.linalg.solve(L, B.T)
    return np.linalg.solve(L.T, Z).T, ridge


def _canonicalize_matrix(weights, factors):
    # Order-2 CP is non-unique up to an invertible mixing; rewrite the same
    # rank-m matrix in its SVD form so columns are orthonormal.
    U1, U2 = factors
    Q1, R1 = np.linalg.qr(U1)
    Q2, R2 = np.linalg.qr(U2)
    u, s, vt = np.linalg.svd((R1 * weights) @ R2.T)
    q = len(s)
    m = len(weights)
    new1 = np.array(U1, copy=True)
    new2 = np.array(U2, copy=True)
    new1[:, :q] = Q1 @ u[:, :q]
    new2[:, :q] = Q2 @ vt[:q].T
    w = np.zeros(m)
    w[:q] = s
    if q < m:
        new1[:, q:] = _unit_columns(new1[:, q:])[0]
        new2[:, q:] = _unit_columns(new2[:, q:])[0]
    return w, [new1, new2]


def cp_als(T, m, max_iter=200, tol=1e-8, seed=0, init="random"):
    """Best rank-``m`` CP approximation by alternating least squares.

    Parameters
    ----------
    T : ndarray or OuterSumTensor
        Order-k tensor, k >= 2.
    m : int
        Number of rank-1 components.
    max_iter : int
        Cap on full sweeps over the modes.
    tol : float
        Stop once the fit ``1 - ||T - M||/||T||`` changes by less than
        ``tol`` relative to its previous value.
    seed : int
        Seed for the random initialization.
    init : {'random', 'hosvd'} or CpFactors
        Starting factors; a ``CpFactors`` instance warm-starts the solver.

    Returns
    -------
    CpFactors
        Unit-norm factor columns with nonnegative weights sorted descending.
        ``diagnostics`` holds ``fit_history``, ``residual`` (absolute
        Frobenius), ``n_iter``, ``converged`` and ``ridge`` (largest ridge
        added to a singular normal equation, 0 if none).
    """
    if m < 1:
        raise ValueError(f"rank must be >= 1, got {m}")
    implicit = isinstance(T, OuterSumTensor)
    if not implicit:
        T = np.asarray(T, dtype=np.float64)
        if T.ndim < 2:
            raise DataError("cp_als needs a tensor of order >= 2")
    dims = T.dims if implicit else T.shape
    k = len(dims)
    if m > min(dims):
        warnings.warn(f"rank {m} exceeds the smallest mode size {min(dims)}",
                      RuntimeWarning, stacklevel=2)
    rng = np.random.default_rng(seed)
    factors = _init_factors(T, m, init, rng)
    norm_sq = T.norm_sq() if implicit else float(np.sum(T * T))
    norm = np.sqrt(max(norm_sq, 0.0))
    diag = {"fit_history": [], "n_iter": 0, "converged": True, "ridge": 0.0,
            "residual": 0.0}
    if norm == 0.0:
        return CpFactors(np.zeros(m), factors, diag)

    weights = np.ones(m)
    grams = [U.T @ U for U in factors]
    fit_prev = None
    diag["converged"] = False
    for it in range(max_iter):
        for r in range(k):
            V = np.ones((m, m))
            for s in range(k):
                if s != r:
                    V *= grams[s]
            B = T.mttkrp(factors, r) if implicit else _dense_mttkrp(T, factors, r)
            A, ridge = _solve_normal(V, B)
            diag["ridge"] = max(diag["ridge"], ridge)
            factors[r], norms = _unit_columns(A)
            weights = norms
            grams[r] = factors[r].T @ factors[r]
        F = CpFactors(weights, factors)
        if implicit:
            res_sq = norm_sq - 2.0 * T.inner_cp(F) + cp_norm_sq(F)
            residual = np.sqrt(max(res_sq, 0.0))
        else:
            residual = float(np.linalg.norm(T - cp_reconstruct(F, None)))
        fit = 1.0 - residual / norm
        diag["fit_history"].append(fit)
        diag["n_iter"] = it + 1
        if fit_prev is not None and abs(fit - fit_prev) <= tol * max(abs(fit_prev), 1e-12):
            diag["converged"] = True
            break
        fit_prev = fit
    diag["residual"] = float(residual)

    if k == 2:
        weights, factors = _canonicalize_matrix(weights, factors)
    order = np.argsort(-np.abs(weights), kind="stable")
    weights = weights[order].copy()
    factors = [U[:, order].copy() for U in factors]
    neg = weights < 0
    weights[neg] = -weights[neg]
    factors[0][:, neg] *= -1.0
    return CpFactors(weights, factors, diag)
