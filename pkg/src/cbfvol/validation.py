"""Input validation helpers in the spirit of ``sklearn.utils.validation``."""

import numbers

import numpy as np

from .matalg import symmetrize


def check_series(Y, name="Y", min_length=1, require_spd=True):
    """Validate a matrix time series and return it as a ``(T, n, n)`` float array.

    Each slice is symmetrized; when ``require_spd`` is set every slice must be
    strictly positive definite.
    """
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 2 and Y.shape[0] == Y.shape[1]:
        Y = Y[None]
    if Y.ndim != 3 or Y.shape[1] != Y.shape[2]:
        raise ValueError(f"{name} must have shape (T, n, n), got {Y.shape}")
    if Y.shape[0] < min_length:
        raise ValueError(f"{name} needs at least {min_length} observations, got {Y.shape[0]}")
    if not np.all(np.isfinite(Y)):
        raise ValueError(f"{name} contains non-finite entries")
    Y = symmetrize(Y)
    if require_spd:
        w = np.linalg.eigvalsh(Y)[:, 0]
        bad = np.flatnonzero(w <= 0)
        if bad.size:
            raise ValueError(
                f"{name}[{bad[0]}] is not positive definite (min eigenvalue {w[bad[0]]:.3e})"
            )
    return Y


def check_int(value, name, min_value=None):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise TypeError(f"{name} must be an integer, got {value!r}")
    if min_value is not None and value < min_value:
        raise ValueError(f"{name} must be >= {min_value}, got {value}")
    return int(value)


def check_dof(nu1, nu2, n):
    """Enforce the matrix-F domain nu1 > n + 1 and nu2 > n + 1 (nu2 may be inf)."""
    nu1 = float(nu1)
    nu2 = float(nu2)
    if not nu1 > n + 1:
        raise ValueError(f"nu1 must exceed n + 1 = {n + 1}, got {nu1}")
    if not nu2 > n + 1:
        raise ValueError(f"nu2 must exceed n + 1 = {n + 1}, got {nu2}")
    return nu1, nu2
