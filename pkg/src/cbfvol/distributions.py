"""Matrix-variate distributions: Wishart and matrix-F densities and samplers."""

from dataclasses import dataclass

import numpy as np
from scipy.special import multigammaln, psi

from .exceptions import MomentConditionError
from .matalg import check_spd, sqrtm_spd, symmetrize
from .validation import check_dof


def make_rng(seed=None, task=0):
    """Counter-based generator keyed by ``(seed, task)``.

    Workers given distinct ``task`` ids draw independent, reproducible streams.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(int(task),))
    return np.random.Generator(np.random.Philox(ss))


def ln_multigamma(n, x):
    """Log of the multivariate gamma function Gamma_n(x)."""
    if not x > (n - 1) / 2:
        raise ValueError(f"ln_multigamma requires x > (n - 1)/2, got n={n}, x={x}")
    return float(multigammaln(x, n))


def multidigamma(n, x):
    """Derivative of ``ln_multigamma`` in ``x``."""
    return float(np.sum(psi(x + (1.0 - np.arange(1, n + 1)) / 2.0)))


@dataclass(frozen=True)
class WishartParams:
    df: float
    scale: np.ndarray

    def __post_init__(self):
        scale = check_spd(self.scale, "scale")
        object.__setattr__(self, "scale", scale)
        if not self.df > self.n - 1:
            raise ValueError(f"Wishart df must exceed n - 1 = {self.n - 1}, got {self.df}")

    @property
    def n(self):
        return self.scale.shape[0]


@dataclass(frozen=True)
class MatrixFParams:
    """Parameters of F(nu, scale): density proportional to
    ``|X|^((nu1-n-1)/2) |I + scale^{-1} X|^(-(nu1+nu2)/2)``.

    The mean is ``nu1 / (nu2 - n - 1) * scale``; use :meth:`from_mean` to
    parameterize by the mean instead.
    """

    nu1: float
    nu2: float
    scale: np.ndarray

    def __post_init__(self):
        scale = check_spd(self.scale, "scale")
        object.__setattr__(self, "scale", scale)
        nu1, nu2 = check_dof(self.nu1, self.nu2, scale.shape[0])
        object.__setattr__(self, "nu1", nu1)
        object.__setattr__(self, "nu2", nu2)

    @property
    def n(self):
        return self.scale.shape[0]

    @classmethod
    def from_mean(cls, nu1, nu2, mean):
        mean = np.asarray(mean, dtype=float)
        n = mean.shape[0]
        return cls(nu1, nu2, (nu2 - n - 1) / nu1 * mean)


def sample_wishart(p, rng, size=None):
    """Bartlett-decomposition Wishart draws (non-integer ``df`` allowed).

    Returns one ``(n, n)`` draw, or ``(size, n, n)`` when ``size`` is given.
    """
    n = p.n
    m = 1 if size is None else int(size)
    chol = np.linalg.cholesky(p.scale)
    A = np.zeros((m, n, n))
    rows, cols = np.tril_indices(n, -1)
    A[:, rows, cols] = rng.standard_normal((m, rows.size))
    A[:, np.arange(n), np.arange(n)] = np.sqrt(rng.chisquare(p.df - np.arange(n), size=(m, n)))
    LA = chol @ A
    W = symmetrize(LA @ np.swapaxes(LA, -1, -2))
    return W[0] if size is None else W


def _standard_f_draws(nu1, nu2, n, rng, m):
    """Draws of L^{1/2} R^{-1} L^{1/2} with L ~ W(nu1, I), R ~ W(nu2, I)."""
    eye = np.eye(n)
    L = sample_wishart(WishartParams(nu1, eye), rng, size=m)
    R = sample_wishart(WishartParams(nu2, eye), rng, size=m)
    bad = np.linalg.cond(R) > 1e13
    if np.any(bad):
        R[bad] = sample_wishart(WishartParams(nu2, eye), rng, size=int(bad.sum()))
        if np.any(np.linalg.cond(R) > 1e13):
            raise np.linalg.LinAlgError("Wishart denominator draw is numerically singular")
    Lh = sqrtm_spd(L)
    return symmetrize(Lh @ np.linalg.solve(R, Lh))


def sample_matrix_f(p, rng, size=None):
    """Draws from F(nu, scale) through the Wishart-pair construction.

    ``scale^{1/2} L^{1/2} R^{-1} L^{1/2} scale^{1/2}``, symmetric roots throughout.
    """
    m = 1 if size is None else int(size)
    D = _standard_f_draws(p.nu1, p.nu2, p.n, rng, m)
    S = sqrtm_spd(p.scale)
    X = symmetrize(S @ D @ S)
    return X[0] if size is None else X


def sample_innovations(nu1, nu2, n, rng, size):
    """Unit-mean innovations: F(nu, (nu2-n-1)/nu1 I) draws, or Wishart(nu1, I/nu1) when nu2 is inf."""
    if np.isinf(nu2):
        return sample_wishart(WishartParams(nu1, np.eye(n) / nu1), rng, size=size)
    c = (nu2 - n - 1) / nu1
    return c * _standard_f_draws(nu1, nu2, n, rng, size)


def _slogdet_pd(X):
    sign, logdet = np.linalg.slogdet(X)
    if np.any(sign <= 0):
        raise ValueError("argument is not positive definite")
    return logdet


def logpdf_matrix_f(X, p):
    """Log-density of F(nu, scale); ``X`` may be a single matrix or a stack."""
    X = symmetrize(X)
    n = p.n
    nu1, nu2 = p.nu1, p.nu2
    if np.any(np.linalg.eigvalsh(X)[..., 0] <= 0):
        raise ValueError("X is not positive definite")
    log_norm = log_norm_const(nu1, nu2, n)
    inv_scale = np.linalg.inv(p.scale)
    return (
        log_norm
        - nu1 / 2 * _slogdet_pd(p.scale)
        + (nu1 - n - 1) / 2 * _slogdet_pd(X)
        - (nu1 + nu2) / 2 * np.linalg.slogdet(np.eye(n) + inv_scale @ X)[1]
    )


def logpdf_wishart(X, p):
    X = symmetrize(X)
    n, df = p.n, p.df
    if np.any(np.linalg.eigvalsh(X)[..., 0] <= 0):
        raise ValueError("X is not positive definite")
    inv_scale = np.linalg.inv(p.scale)
    tr = np.einsum("ij,...ji->...", inv_scale, X)
    return (
        (df - n - 1) / 2 * _slogdet_pd(X)
        - tr / 2
        - df * n / 2 * np.log(2.0)
        - df / 2 * _slogdet_pd(p.scale)
        - ln_multigamma(n, df / 2)
    )


def matrix_f_mean(p):
    n = p.n
    if not p.nu2 > n + 1:
        raise MomentConditionError(f"mean requires nu2 > n + 1 = {n + 1}, got nu2={p.nu2}")
    return p.nu1 / (p.nu2 - n - 1) * p.scale


def moment_coefficients(nu1, nu2, n):
    """Coefficients (s1, s2) of the unit-mean innovation's second moment.

    For Delta with E[Delta] = I: ``E[vec D vec D'] = s1 vec(I)vec(I)' + s2 (I + K)``.
    Requires nu2 > n + 3. For nu2 = inf (Wishart(nu1, I/nu1)) the limits
    s1 = 1 and s2 = 1/nu1 are returned.
    """
    if np.isinf(nu2):
        return 1.0, 1.0 / nu1
    if not nu2 > n + 3:
        raise MomentConditionError(
            f"second moments require nu2 > n + 3 = {n + 3}, got nu2={nu2}"
        )
    den = nu1 * (nu2 - n) * (nu2 - n - 3)
    s1 = (nu2 - n - 1) * (nu1 * (nu2 - n - 2) + 2) / den
    s2 = (nu2 - n - 1) * (nu1 + nu2 - n - 1) / den
    return s1, s2


def log_norm_const(nu1, nu2, n):
    """log Lambda(nu) of the matrix-F density."""
    return ln_multigamma(n, (nu1 + nu2) / 2) - ln_multigamma(n, nu1 / 2) - ln_multigamma(n, nu2 / 2)

