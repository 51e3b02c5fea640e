"""Dense matrix primitives: centering, eigen/singular decompositions,
regularized inverse square roots and their Frechet derivative, PCA.

Data matrices follow the features x samples convention throughout.
"""

from typing import NamedTuple

import numpy as np

from .exceptions import ConvergenceError, DataError, SingularCovarianceError

DEFAULT_EPS = 1e-4


class SymEig(NamedTuple):
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


class Svd(NamedTuple):
    U: np.ndarray
    s: np.ndarray
    V: np.ndarray


def as_matrix(X, name="X"):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DataError(f"{name} must be 2-D, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise DataError(f"{name} contains non-finite entries")
    return X


def center_columns(X):
    """Subtract the per-feature (row) mean from every sample (column).

    Returns
    -------
    Xc : ndarray (d, n)
    mean : ndarray (d,)
    """
    X = as_matrix(X)
    if X.size == 0:
        raise DataError("cannot center an empty matrix")
    mean = X.mean(axis=1)
    return X - mean[:, None], mean


def _sign_fix(vectors):
    # largest-magnitude entry of each column made positive; argmax takes the
    # lowest index on ties
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return signs


def sym_eig(S):
    """Full eigendecomposition of a symmetric matrix, eigenvalues descending."""
    S = as_matrix(S, "S")
    if S.shape[0] != S.shape[1]:
        raise DataError(f"sym_eig needs a square matrix, got {S.shape}")
    S = 0.5 * (S + S.T)
    try:
        w, V = np.linalg.eigh(S)
    except np.linalg.LinAlgError as exc:
        off = np.max(np.abs(S - np.diag(np.diag(S)))) if S.size else 0.0
        raise ConvergenceError(
            f"eigensolver did not converge (max off-diagonal {off:.3e})"
        ) from exc
    order = np.argsort(-w, kind="stable")
    w, V = w[order], V[:, order]
    return SymEig(w, V * _sign_fix(V))


def svd(A):
    """Economy SVD with singular values descending and a fixed sign convention."""
    A = as_matrix(A, "A")
    try:
        U, s, Vt = np.linalg.svd(A, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError("SVD did not converge") from exc
    signs = _sign_fix(U) if U.size else np.ones(len(s))
    return Svd(U * signs, s, Vt.T * signs)


def _regularized_eig(S, eps):
    S = as_matrix(S, "S")
    if S.shape[0] != S.shape[1]:
        raise DataError(f"expected a square matrix, got {S.shape}")
    w, V = sym_eig(S + eps * np.eye(S.shape[0]))
    if w.size and w[-1] <= 0:
        raise SingularCovarianceError(float(w[-1]))
    return w, V


def inv_sqrt_sym(S, eps=DEFAULT_EPS):
    """Return ``(S + eps*I)^{-1/2}`` for a symmetric PSD ``S``."""
    w, V = _regularized_eig(S, eps)
    R = (V / np.sqrt(w)) @ V.T
    return 0.5 * (R + R.T)


def inv_sqrt_kernel(w):
    """Divided differences of ``g(x) = x^{-1/2}`` on the eigenvalues ``w``.

    ``(g(a) - g(b)) / (a - b) = -1 / (sqrt(a) sqrt(b) (sqrt(a) + sqrt(b)))``,
    which reduces to ``g'(a)`` on the diagonal, so no degenerate-pair branch
    is needed.
    """
    r = np.sqrt(w)
    return -1.0 / (np.outer(r, r) * (r[:, None] + r[None, :]))


def daleckii_krein(w, V, E):
    """Apply ``E -> V (K o (V^T E V)) V^T`` with the inverse-sqrt kernel ``K``.

    The map is self-adjoint under the Frobenius inner product, so the same
    call serves as the forward derivative and its adjoint in backprop.
    """
    return V @ (inv_sqrt_kernel(w) * (V.T @ E @ V)) @ V.T


def frechet_inv_sqrt(S, dS, eps=DEFAULT_EPS):
    """Directional derivative of ``S -> (S + eps*I)^{-1/2}`` along ``dS``."""
    w, V = _regularized_eig(S, eps)
    dS = as_matrix(dS, "dS")
    if dS.shape != (len(w), len(w)):
        raise DataError(f"direction shape {dS.shape} does not match {S.shape}")
    return daleckii_krein(w, V, dS)


def pca_fit(X, energy=None, max_dim=None):
    """Leading principal directions of centered data ``X`` (d x n).

    Parameters
    ----------
    X : ndarray (d, n)
        Centered data.
    energy : float in (0, 1], optional
        Keep the fewest components whose eigenvalue share reaches ``energy``.
        Defaults to keeping every component with nonzero variance.
    max_dim : int, optional
        Upper bound on the number of components.

    Returns
    -------
    ndarray (q, d)
        Projection with orthonormal rows.
    """
    X = as_matrix(X)
    if energy is not None and not 0.0 < energy <= 1.0:
        raise ValueError(f"energy must lie in (0, 1], got {energy}")
    if max_dim is not None and max_dim < 1:
        raise ValueError(f"max_dim must be >= 1, got {max_dim}")
    d, n = X.shape
    if not np.any(X):
        raise DataError("cannot run PCA on an all-zero matrix")
    if d <= n:
        w, V = sym_eig(X @ X.T)
        w = np.clip(w, 0.0, None)
        directions = V
    else:
        w, V = sym_eig(X.T @ X)
        w = np.clip(w, 0.0, None)
        keep = w > w[0] * 1e-12
        directions = X @ (V[:, keep] / np.sqrt(w[keep]))
        w = w[keep]
        directions *= _sign_fix(directions)
    total = w.sum()
    frac = np.cumsum(w) / total
    positive = int(np.count_nonzero(w > w[0] * 1e-12))
    if energy is None:
        q = positive
    else:
        q = int(np.searchsorted(frac, energy - 1e-12) + 1)
        q = min(q, positive)
    if max_dim is not None:
        q = min(q, max_dim)
    return directions[:, :q].T.copy()
