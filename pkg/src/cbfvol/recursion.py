"""Vectorized BEKK-type recursion and its adjoint.

A recursion is described by an intercept ``C``, "arch" terms ``(coef, R)``
contributing ``coef @ R_t @ coef'`` for a regressor series ``R`` and "garch"
terms ``(coef, j)`` contributing ``coef @ Sigma_{t-j} @ coef'``.  Coefficients
are ``(n, n)`` matrices, or length-``n`` vectors when the structure is diagonal
(then ``a a' * R`` replaces the sandwich).
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import lfilter


def sandwich(coef, R):
    """``coef R coef'`` for a stack ``R`` of shape ``(..., n, n)``."""
    if coef.ndim == 1:
        return np.outer(coef, coef) * R
    return coef @ R @ coef.T


def lag_regressors(Y, Y_init, P):
    """Stack ``R_i[t] = Y_{t-i}`` for ``i = 1..P``; shape ``(P, T, n, n)``.

    ``Y_init`` holds the pre-sample values in chronological order (its last
    entry is ``Y_0``) and must contain at least ``P`` matrices.
    """
    T = Y.shape[0]
    M = Y_init.shape[0]
    full = np.concatenate([Y_init, Y], axis=0)
    return np.stack([full[M - i : M - i + T] for i in range(1, P + 1)])


def har_regressors(Y, Y_init):
    """Daily, weekly (5) and monthly (22) trailing averages of past ``Y``."""
    if Y_init.shape[0] < 22:
        raise ValueError("HAR recursion needs 22 pre-sample matrices")
    full = np.concatenate([Y_init[-22:], Y], axis=0)
    # window k of length w covers full[k : k + w]; Y_{t-1} sits at full[20 + t]
    monthly = sliding_window_view(full[:-1], 22, axis=0).mean(axis=-1)
    weekly = sliding_window_view(full[17:-1], 5, axis=0).mean(axis=-1)
    daily = full[21:-1]
    return np.stack([daily, weekly, monthly])


def _beta(garch, n, diagonal):
    """Per-lag elementwise coefficients ``sum_k b b'`` (diagonal structure)."""
    Q = max((j for _, j in garch), default=0)
    beta = np.zeros((Q, n, n))
    for coef, j in garch:
        beta[j - 1] += np.outer(coef, coef)
    return beta


def _bstar(garch, n):
    Q = max((j for _, j in garch), default=0)
    bstar = np.zeros((Q, n * n, n * n))
    for coef, j in garch:
        bstar[j - 1] += np.kron(coef, coef)
    return bstar


def _ar_filter_elementwise(X, beta, reverse=False):
    """``S_t = X_t + sum_j beta_j * S_{t -/+ j}`` elementwise via lfilter."""
    n = X.shape[1]
    S = np.empty_like(X)
    iu, ju = np.triu_indices(n)
    for p, q in zip(iu, ju):
        a = np.concatenate([[1.0], -beta[:, p, q]])
        x = X[:, p, q]
        if reverse:
            s = lfilter([1.0], a, x[::-1])[::-1]
        else:
            s = lfilter([1.0], a, x)
        S[:, p, q] = s
        S[:, q, p] = s
    return S


def garch_filter(X, garch, Sigma_init, diagonal):
    """Run ``Sigma_t = X_t + sum B Sigma_{t-j} B'`` forward in time.

    ``Sigma_init`` holds pre-sample Sigma values in chronological order.
    """
    if not garch:
        return X
    T, n, _ = X.shape
    M = Sigma_init.shape[0]
    if diagonal:
        beta = _beta(garch, n, True)
        Q = beta.shape[0]
        X = X.copy()
        # fold the pre-sample Sigma values into the first Q inputs
        for j in range(1, Q + 1):
            for t in range(min(j, T)):
                X[t] += beta[j - 1] * Sigma_init[M - j + t]
        return _ar_filter_elementwise(X, beta)
    bstar = _bstar(garch, n)
    Q = bstar.shape[0]
    m = n * n
    x = X.reshape(T, m)
    hist = np.concatenate([Sigma_init[M - Q :].reshape(Q, m), np.empty((T, m))])
    bcat = np.concatenate(list(bstar), axis=1)  # (m, Q m): [B1*, B2*, ...]
    for t in range(T):
        past = hist[t : t + Q][::-1].reshape(-1)  # Sigma_{t-1}, ..., Sigma_{t-Q}
        hist[Q + t] = x[t] + bcat @ past
    S = hist[Q:].reshape(T, n, n)
    return 0.5 * (S + np.swapaxes(S, 1, 2))


def garch_adjoint(G, garch, diagonal):
    """Adjoint of :func:`garch_filter`: ``Lam_t = G_t + sum B' Lam_{t+j} B``."""
    if not garch:
        return G
    T, n, _ = G.shape
    if diagonal:
        return _ar_filter_elementwise(G, _beta(garch, n, True), reverse=True)
    bstar = _bstar(garch, n)
    Q = bstar.shape[0]
    m = n * n
    g = G.reshape(T, m)
    lam = np.zeros((T + Q, m))
    bcatT = np.concatenate([b.T for b in bstar], axis=1)
    for t in range(T - 1, -1, -1):
        lam[t] = g[t] + bcatT @ lam[t + 1 : t + 1 + Q].reshape(-1)
    L = lam[:T].reshape(T, n, n)
    return 0.5 * (L + np.swapaxes(L, 1, 2))


def shifted_sigma(Sigma, Sigma_init, j):
    """``Sigma_{t-j}`` for t = 1..T using pre-sample values where needed."""
    T = Sigma.shape[0]
    M = Sigma_init.shape[0]
    full = np.concatenate([Sigma_init, Sigma], axis=0)
    return full[M - j : M - j + T]


def run(C, arch, garch, Sigma_init, diagonal, T=None):
    """Full forward pass returning the ``(T, n, n)`` Sigma path."""
    if arch:
        X = C + sum(sandwich(coef, R) for coef, R in arch)
    else:
        X = np.broadcast_to(C, (T,) + C.shape).copy()
    return garch_filter(X, garch, Sigma_init, diagonal)
