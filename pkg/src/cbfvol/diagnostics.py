"""Inner-product portmanteau tests on standardized CBF residuals.

The residual of period ``t`` is ``z_t = vec(Sigma_t^{-1/2} Y_t Sigma_t^{-1/2} - I)``
and the lag-``j`` statistic is ``b_{t,j} = z_t' z_{t-j}``.  Under a correctly
specified model ``z_t`` is i.i.d. with mean zero, so the averages
``V_j = (1/T) sum_t b_{t,j}`` are centred and

    Pi(l) = T * V' Var^{-1} V  ~  chi2(l)

once the variance accounts for the estimation of ``theta``.  Writing the
estimator's influence as ``theta_hat - theta ~ (1/T) sum psi_t``, a first-order
expansion gives ``sqrt(T) V(theta_hat) ~ T^{-1/2} sum (b_t + D psi_t)`` with
``D[j, p] = E[z_{t-j}' dz_t/dtheta_p]``.  Three variance estimators are offered:

``"corrected"``
    ``c2 I + D O D' + D C + C' D'`` with ``C = E[psi_t b_t']`` (default).
    For the MLE the score identity ``E[b_t s_t'] = D`` gives the closed form
    ``c2 I - D O^{-1} D'``; for the VT estimator ``C`` is a sample average,
``"robust"``
    sample second moment of ``b_t + D psi_t``,
``"additive"``
    ``c2 I + D O^{-1} D'`` for the MLE and ``c2 I + D_v O_v D_v'`` for the
    VT estimator, i.e. without the cross-covariance term.

``c2`` is the variance of ``b_{t,j}``, which equals ``tr(S_z^2)`` with
``S_z = Var(z_t)``.  By default (``c2="model"``) ``S_z`` comes from the
closed-form second moments of the fitted innovation distribution; ``"outer"``
uses the sample ``S_z`` and ``"scalar"`` uses ``(E[z' z])^2``.  The sample
readings involve fourth moments of the residuals, which do not exist for
small ``nu2``, so they are much noisier.
"""

import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .estimation import VtFitResult, _objective_for, _robust_inverse, fd_jacobian, per_period_scores
from .exceptions import SingularCovarianceWarning
from .distributions import moment_coefficients
from .matalg import inv_sqrtm_spd

logger = logging.getLogger(__name__)

VARIANCE_FORMS = ("corrected", "robust", "additive")
C2_READINGS = ("model", "outer", "scalar")


@dataclass
class TestResult:
    statistic: float
    lags: int
    p_value: float
    dof: int
    pinv_used: bool = False
    variance: str = "corrected"
    vstat: np.ndarray = None

    def reject(self, alpha=0.05):
        return bool(self.p_value < alpha)


def residuals(Sigma, Y):
    """Rows ``vec(Sigma_t^{-1/2} Y_t Sigma_t^{-1/2} - I)``, shape ``(T, n^2)``."""
    Sigma = np.asarray(Sigma, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Sigma.shape != Y.shape:
        raise ValueError("Sigma and Y must have the same shape")
    R = inv_sqrtm_spd(Sigma)
    E = R @ Y @ R - np.eye(Y.shape[-1])
    return np.swapaxes(E, -1, -2).reshape(Y.shape[0], -1)


def vstat(Z, l):
    """``V_j = (1/T) sum_{t=l+1}^T z_t' z_{t-j}`` for ``j = 1..l``."""
    Z = np.asarray(Z, dtype=float)
    T = Z.shape[0]
    if not 1 <= l < T:
        raise ValueError(f"lag l must satisfy 1 <= l < T = {T}, got {l}")
    return np.array([np.sum(Z[l:] * Z[l - j : T - j]) for j in range(1, l + 1)]) / T


def _lag_products(Z, l):
    """``b_{t,j}`` for ``t = l+1..T`` as a ``(T - l, l)`` array."""
    T = Z.shape[0]
    return np.column_stack([np.sum(Z[l:] * Z[l - j : T - j], axis=1) for j in range(1, l + 1)])


def model_c2(nu, n):
    """``tr(S_z^2)`` for ``S_z = Var(vec(Delta))`` of the unit-mean innovation."""
    s1, s2 = moment_coefficients(float(nu[0]), float(nu[1]) if len(nu) > 1 else np.inf, n)
    a = s1 - 1.0
    return float(a * a * n * n + 4.0 * a * s2 * n + 2.0 * s2 * s2 * (n * n + n))


def _base_variance(Z, reading, l, nu=None):
    """Variance of ``b_t`` before the estimation correction, as an ``(l, l)`` matrix."""
    T, m = Z.shape
    if reading == "model":
        c2 = model_c2(nu, int(round(np.sqrt(m))))
    elif reading == "outer":
        Sz = Z.T @ Z / T
        c2 = float(np.sum(Sz * Sz))
    elif reading == "scalar":
        c2 = float(np.mean(np.sum(Z * Z, axis=1)) ** 2)
    else:
        raise ValueError(f"c2 must be one of {C2_READINGS}")
    return c2 * np.eye(l)


def residual_jacobian(obj, theta, l):
    """``D[j, p] = (1/T) sum_{t>l} z_{t-j}' dz_t/dtheta_p`` by central differences.

    Columns for ``nu`` are identically zero since the residuals do not depend
    on the degrees of freedom.
    """
    Y = obj.Y
    T = Y.shape[0]
    Z = residuals(obj.sigma(theta), Y)
    nu_idx = set(range(obj.layout.size)[obj.layout.nu_slice])
    idx = [p for p in range(theta.size) if p not in nu_idx]
    dZ = fd_jacobian(lambda t: residuals(obj.sigma(t), Y), theta, idx=idx)  # (T, n^2, p)
    D = np.zeros((l, theta.size))
    for j in range(1, l + 1):
        D[j - 1, idx] = np.einsum("tk,tkp->p", Z[l - j : T - j], dZ[l:]) / T
    return D, Z


def _statistic(V, Var, T, l):
    Var = 0.5 * (Var + Var.T)
    w = np.linalg.eigvalsh(Var)
    pinv_used = not (w[0] > 0 and w[-1] / w[0] < 1e12)
    if pinv_used:
        warnings.warn("test variance is singular; using a pseudo-inverse", SingularCovarianceWarning)
        inv = np.linalg.pinv(Var, hermitian=True)
        dof = int(np.sum(w > max(w[-1], 0.0) * 1e-12)) if w[-1] > 0 else 0
    else:
        inv = np.linalg.inv(Var)
        dof = l
    stat = float(max(T * V @ inv @ V, 0.0))
    p = 1.0 if dof == 0 else float(stats.chi2.sf(stat, dof))
    return stat, p, dof, pinv_used


def _influence(fit, obj):
    """Per-period influence ``psi_t`` of the estimator, shape ``(T, dim)``."""
    theta = fit.theta_hat
    if isinstance(fit, VtFitResult):
        Sigma = obj.sigma(theta)
        eta = (obj.Y - Sigma).reshape(obj.T, -1, order="F") @ fit.Psi.T
        zeta_idx = np.arange(fit.layout.size)[fit.layout.zeta_slice]
        w = np.hstack([eta, per_period_scores(obj, theta, zeta_idx)])
        return w @ fit.transform.T
    Hinv, _ = _robust_inverse(fit.hessian)
    return -per_period_scores(obj, theta) @ Hinv


def _ensure_cov(fit, obj):
    if fit.cov is not None:
        return
    from .estimation import asymp_cov_mle, asymp_cov_vt

    if isinstance(fit, VtFitResult):
        asymp_cov_vt(fit, obj.Y, obj=obj)
    else:
        asymp_cov_mle(fit, obj.Y, obj=obj)


def pi_test(fit, Y, l, variance="corrected", c2="model", obj=None):
    """Portmanteau test ``Pi(l)`` for a full-MLE fit (or ``Pi_v(l)`` for a VT fit).

    Parameters
    ----------
    fit : FitResult or VtFitResult
    Y : array, shape (T, n, n)
        The series the model was fitted to.
    l : int
        Number of lags.
    variance : {"corrected", "robust", "additive"}
    c2 : {"model", "outer", "scalar"}
        Reading of the variance of ``z_t' z_{t-j}`` used by the
        ``"corrected"`` and ``"additive"`` forms.

    Returns
    -------
    TestResult
    """
    if variance not in VARIANCE_FORMS:
        raise ValueError(f"variance must be one of {VARIANCE_FORMS}")
    obj = _objective_for(fit, Y, obj)
    T = obj.T
    if not 1 <= l < T:
        raise ValueError(f"lag l must satisfy 1 <= l < T = {T}, got {l}")
    _ensure_cov(fit, obj)
    theta = fit.theta_hat
    D, Z = residual_jacobian(obj, theta, l)
    V = vstat(Z, l)
    if not np.any(Z):
        return TestResult(0.0, l, 1.0, l, True, variance, V)
    vt = isinstance(fit, VtFitResult)
    if variance == "robust":
        psi = _influence(fit, obj)
        b = _lag_products(Z, l)
        u = b + psi[l:] @ D.T
        Var = u.T @ u / T
    else:
        nu = fit.layout.split(theta)[3]
        base = _base_variance(Z, c2, l, nu)
        if vt:
            core = D @ (fit.cov * T) @ D.T
            if variance == "corrected":
                C = _influence(fit, obj)[l:].T @ _lag_products(Z, l) / T
                cross = D @ C
                core = core + cross + cross.T
        else:
            core = D @ np.linalg.pinv(fit.hessian, hermitian=True) @ D.T
            if variance == "corrected":
                core = -core
        Var = base + core
    stat, p, dof, pinv_used = _statistic(V, Var, T, l)
    return TestResult(stat, l, p, dof, pinv_used, variance, V)


def pi_v_test(vt_fit, Y, l, variance="corrected", c2="model", obj=None):
    """``Pi_v(l)`` for a two-step VT fit; see :func:`pi_test`."""
    if not isinstance(vt_fit, VtFitResult):
        raise TypeError("pi_v_test needs a VtFitResult")
    return pi_test(vt_fit, Y, l, variance, c2, obj)
