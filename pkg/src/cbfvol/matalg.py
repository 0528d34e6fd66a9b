"""Dense linear-algebra primitives: vec/vech calculus, SPD roots, norms."""

import numpy as np


def vec(M):
    """Column-stacking of a matrix (Fortran order)."""
    return np.asarray(M).reshape(-1, order="F")


def unvec(v, n):
    return np.asarray(v).reshape(n, n, order="F")


def _check_square(M, name="M"):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {M.shape}")
    return M


def vech(M):
    """Stack the lower-triangular part of a symmetric matrix column by column.

    Examples
    --------
    >>> vech(np.array([[1.0, 2.0], [2.0, 3.0]]))
    array([1., 2., 3.])
    """
    M = _check_square(M)
    n = M.shape[0]
    rows, cols = np.triu_indices(n)
    # column-major lower triangle == row-major upper triangle of M'
    return M.T[rows, cols].copy()


def unvech(v, n):
    """Inverse of :func:`vech`; returns a symmetric ``n x n`` matrix."""
    v = np.asarray(v, dtype=float).ravel()
    if v.size != n * (n + 1) // 2:
        raise ValueError(f"vech vector of length {v.size} does not match n={n}")
    M = np.zeros((n, n))
    rows, cols = np.triu_indices(n)
    M[cols, rows] = v
    M[rows, cols] = v
    return M


def kron(A, B):
    return np.kron(A, B)


def commutation_matrix(n):
    """The ``n^2 x n^2`` permutation K with ``K @ vec(A) == vec(A.T)``."""
    if n < 1:
        raise ValueError("commutation_matrix requires n >= 1")
    idx = np.arange(n * n).reshape(n, n, order="F")
    K = np.zeros((n * n, n * n))
    K[np.arange(n * n), idx.T.reshape(-1, order="F")] = 1.0
    return K


def symmetrize(M):
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def is_spd(M):
    """True when every matrix in a (possibly stacked) array is positive definite."""
    M = symmetrize(M)
    if not np.all(np.isfinite(M)):
        return False
    return bool(np.all(np.linalg.eigvalsh(M) > 0))


def check_spd(M, name="matrix"):
    """Validate and symmetrize a positive-definite matrix.

    The matrix is symmetrized as ``(M + M') / 2``; it is rejected (never
    clamped) when its smallest eigenvalue is not strictly positive.
    """
    M = _check_square(M, name)
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} contains non-finite entries")
    S = symmetrize(M)
    w = np.linalg.eigvalsh(S)
    if w[0] <= 0:
        raise ValueError(f"{name} is not positive definite (min eigenvalue {w[0]:.3e})")
    return S


def sqrtm_spd(M):
    """Symmetric square root via eigendecomposition. Works on stacked arrays."""
    M = symmetrize(M)
    w, U = np.linalg.eigh(M)
    if np.any(w <= 0):
        raise ValueError("sqrtm_spd: matrix is not positive definite")
    return symmetrize((U * np.sqrt(w)[..., None, :]) @ np.swapaxes(U, -1, -2))


def inv_sqrtm_spd(M):
    M = symmetrize(M)
    w, U = np.linalg.eigh(M)
    if np.any(w <= 0):
        raise ValueError("inv_sqrtm_spd: matrix is not positive definite")
    return symmetrize((U / np.sqrt(w)[..., None, :]) @ np.swapaxes(U, -1, -2))


def spectral_radius(M):
    M = _check_square(M)
    if M.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def mat_norm(M, kind="frobenius"):
    """Frobenius norm ``sqrt(tr(M'M))`` or spectral norm ``sqrt(rho(M'M))``."""
    M = np.asarray(M, dtype=float)
    if kind == "frobenius":
        return float(np.sqrt(np.sum(M * M)))
    if kind == "spectral":
        return float(np.linalg.norm(M, 2))
    raise ValueError(f"unknown norm kind {kind!r}")


def _small_adjugate(X):
    """Adjugate and determinant of a stack of 1x1, 2x2 or 3x3 matrices."""
    n = X.shape[-1]
    if n == 1:
        return np.ones_like(X), X[..., 0, 0]
    if n == 2:
        a, b, c, d = X[..., 0, 0], X[..., 0, 1], X[..., 1, 0], X[..., 1, 1]
        adj = np.stack([np.stack([d, -b], -1), np.stack([-c, a], -1)], -2)
        return adj, a * d - b * c
    cof = np.empty_like(X)
    for i in range(3):
        i1, i2 = (i + 1) % 3, (i + 2) % 3
        for j in range(3):
            j1, j2 = (j + 1) % 3, (j + 2) % 3
            cof[..., i, j] = X[..., i1, j1] * X[..., i2, j2] - X[..., i1, j2] * X[..., i2, j1]
    det = np.einsum("...j,...j->...", X[..., 0, :], cof[..., 0, :])
    return np.swapaxes(cof, -1, -2), det


def spd_inv_logdet(X):
    """Inverse and log-determinant of a stack of symmetric positive-definite matrices.

    Closed forms are used for n <= 3 (positive definiteness checked through
    leading principal minors); larger matrices go through Cholesky.  Raises
    ``numpy.linalg.LinAlgError`` when some matrix is not positive definite.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[-1]
    if n <= 3:
        adj, det = _small_adjugate(X)
        minors_ok = X[..., 0, 0] > 0
        if n == 3:
            minors_ok &= X[..., 0, 0] * X[..., 1, 1] - X[..., 0, 1] * X[..., 1, 0] > 0
        if not (np.all(minors_ok) and np.all(det > 0)):
            raise np.linalg.LinAlgError("matrix is not positive definite")
        return adj / det[..., None, None], np.log(det)
    L = np.linalg.cholesky(X)
    logdet = 2.0 * np.log(np.diagonal(L, axis1=-2, axis2=-1)).sum(axis=-1)
    Linv = np.linalg.inv(L)
    return np.swapaxes(Linv, -1, -2) @ Linv, logdet
