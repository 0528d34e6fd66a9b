"""Eigen-based factor extraction for high-dimensional realized covariance series.

The loading matrix ``F_hat`` holds the top-``r`` eigenvectors of
``S_bar = (1/T) sum (Y_t - Y_bar)^2``; the factor series is
``Y_ft = F_hat' Y_t F_hat`` and the static remainder is
``Y0 = Y_bar - F_hat F_hat' Y_bar F_hat F_hat'``.  A dynamic model fitted to
the ``r x r`` factor series is mapped back by ``F_hat Sigma_f F_hat' + Y0``.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .estimation import fit_mle, fit_vt
from .exceptions import DegenerateError
from .matalg import symmetrize
from .validation import check_int, check_series

logger = logging.getLogger(__name__)

TIE_RTOL = 1e-10


@dataclass
class RankDiagnostics:
    eigenvalues: np.ndarray
    ratios: np.ndarray
    suggested_r: int


@dataclass
class FactorDecomp:
    """Result of :func:`extract_factors`.

    Attributes
    ----------
    F_hat : ndarray, shape (n, r)
        Orthonormal loadings, each column's largest-magnitude entry positive.
    Yf_series : ndarray, shape (T, r, r)
    Y0_hat : ndarray, shape (n, n)
    eigenvalues : ndarray
        Full descending spectrum of ``S_bar``.
    """

    F_hat: np.ndarray
    Yf_series: np.ndarray
    Y0_hat: np.ndarray
    eigenvalues: np.ndarray

    @property
    def r(self):
        return self.F_hat.shape[1]

    @property
    def n(self):
        return self.F_hat.shape[0]

    @property
    def projector(self):
        return self.F_hat @ self.F_hat.T


def _s_bar(Y):
    D = Y - Y.mean(axis=0)
    return symmetrize(np.mean(D @ D, axis=0))


def _spectrum(Y):
    w, U = np.linalg.eigh(_s_bar(Y))
    order = np.argsort(w)[::-1]
    w, U = w[order], U[:, order]
    w = np.clip(w, 0.0, None)
    return w, U


def eigen_ratios(Y):
    """Eigenvalues of ``S_bar`` in descending order, adjacent ratios and a suggested rank.

    The suggestion is the ``i <= floor(n/2)`` maximising ``lambda_i / lambda_{i+1}``
    (1 when ``n = 1``).  A numerically zero denominator gives an infinite
    ratio, and a pair of numerically zero eigenvalues gives 1.
    """
    Y = check_series(Y, min_length=2)
    w, _ = _spectrum(Y)
    if w[0] <= 0:
        raise DegenerateError("S_bar is zero: the series is constant")
    n = w.size
    tiny = TIE_RTOL * w[0]
    num, den = w[:-1], w[1:]
    # a vanishing denominator marks a spike (inf); two vanishing eigenvalues carry no signal (1)
    ratios = np.ones(n - 1)
    live = den > tiny
    ratios[live] = num[live] / den[live]
    ratios[~live & (num > tiny)] = np.inf
    if n == 1:
        return RankDiagnostics(w, ratios, 1)
    search = ratios[: max(n // 2, 1)]
    suggested = int(np.argmax(search)) + 1
    return RankDiagnostics(w, ratios, suggested)


def _sign_fix(U):
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs


def extract_factors(Y, r):
    """Top-``r`` eigen-decomposition of ``S_bar`` and the projected factor series."""
    Y = check_series(Y, min_length=2)
    n = Y.shape[1]
    r = check_int(r, "r", 1)
    if r > n:
        raise ValueError(f"r must satisfy 1 <= r <= n = {n}, got {r}")
    w, U = _spectrum(Y)
    if r < n and abs(w[r - 1] - w[r]) <= TIE_RTOL * max(w[0], 1e-300):
        raise DegenerateError(
            f"eigenvalues {r} and {r + 1} are tied ({w[r - 1]:.6g}, {w[r]:.6g}); "
            "the rank-r factor space is not identified"
        )
    F = _sign_fix(U[:, :r])
    Yf = symmetrize(F.T @ Y @ F)
    Ybar = Y.mean(axis=0)
    Pm = F @ F.T
    Y0 = symmetrize(Ybar - Pm @ Ybar @ Pm)
    return FactorDecomp(F, Yf, Y0, w)


def project(decomp, Y):
    """Factor series ``F_hat' Y_t F_hat`` for new observations."""
    Y = np.asarray(Y, dtype=float)
    return symmetrize(decomp.F_hat.T @ Y @ decomp.F_hat)


def reconstruct(decomp, sigma_f, psd=False):
    """Full-dimension prediction ``F_hat Sigma_f F_hat' + Y0``.

    With ``psd=True`` negative eigenvalues of the result are clipped to zero.
    """
    sigma_f = np.asarray(sigma_f, dtype=float)
    r = decomp.r
    if sigma_f.shape[-2:] != (r, r):
        raise ValueError(f"sigma_f must be {r}x{r}, got {sigma_f.shape}")
    out = symmetrize(decomp.F_hat @ sigma_f @ decomp.F_hat.T + decomp.Y0_hat)
    if psd:
        w, U = np.linalg.eigh(out)
        out = symmetrize((U * np.clip(w, 0.0, None)[..., None, :]) @ np.swapaxes(U, -1, -2))
    return out


def fit_f_cbf(decomp, orders=(1, 1, 1), structure="diagonal", vt=True, family="matrix_f", har=False,
              opts=None, init=None):
    """Fit a CBF model (VT or full MLE) to the factor series of ``decomp``."""
    fitter = fit_vt if vt else fit_mle
    return fitter(decomp.Yf_series, orders=orders, structure=structure, family=family, har=har,
                  init=init, opts=opts)
