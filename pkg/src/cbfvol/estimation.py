"""Full maximum likelihood and two-step variance-targeting (VT) estimation.

Both estimators minimise the average negative log-likelihood with L-BFGS-B in
an unconstrained reparameterisation:

* ``Omega = L L'`` with the diagonal of ``L`` on the log scale,
* ``nu_i = n + 1 + exp(eta_i)`` with ``eta_i`` in ``[-20, 20]``,
* coefficient entries as they are (signs canonicalised afterwards).

A few Newton steps on a finite-difference Hessian polish the optimum before
convergence is judged against ``grad_tol``.  Standard errors come from the
inverse average Hessian (MLE) or the two-step sandwich (VT).
"""

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .distributions import make_rng
from .exceptions import FitError, ConvergenceWarning, SingularCovarianceWarning
from .likelihood import PENALTY, Objective, ParamLayout, make_init
from .matalg import unvech, vec, vech
from .validation import check_series

logger = logging.getLogger(__name__)

ETA_BOUND = 20.0
_FD_STEP = np.cbrt(np.finfo(float).eps)


@dataclass
class FitOptions:
    """Optimizer settings shared by :func:`fit_mle` and :func:`fit_vt`."""

    grad_tol: float = 1e-6
    max_iter: int = 2000
    n_restarts: int = 5
    jitter: float = 0.1
    newton_steps: int = 4
    min_obs_factor: float = 5.0
    compute_cov: bool = True
    seed: int = 0


@dataclass
class FitResult:
    """Outcome of :func:`fit_mle`.

    ``cov`` estimates ``O^{-1} / T`` where ``O`` is the average Hessian of the
    per-period negative log-likelihood at ``theta_hat``.
    """

    spec: object
    theta_hat: np.ndarray
    layout: ParamLayout
    neg_loglik: float
    converged: bool
    iterations: int
    grad_norm: float
    nobs: int
    init: object = None
    cov: np.ndarray = None
    std_errors: np.ndarray = None
    hessian: np.ndarray = None
    cov_singular: bool = False
    n_starts: int = 1

    @property
    def family(self):
        return self.layout.family

    @property
    def param_names(self):
        return self.layout.names()

    def summary(self):
        """Parameter table as a list of ``(name, estimate, std_error)`` tuples."""
        se = self.std_errors if self.std_errors is not None else np.full(self.theta_hat.size, np.nan)
        return list(zip(self.param_names, self.theta_hat.tolist(), se.tolist()))


@dataclass
class VtFitResult(FitResult):
    """Outcome of :func:`fit_vt`.

    ``theta_hat`` is ``(vec(S_hat), zeta_hat)``; ``cov`` estimates
    ``O_v / T`` for that vector.  ``omega_hat`` is the implied intercept.
    """

    omega_hat: np.ndarray = None
    J1: np.ndarray = None
    J2: np.ndarray = None
    Eww: np.ndarray = None
    Psi: np.ndarray = None
    transform: np.ndarray = field(default=None, repr=False)

    @property
    def s_hat(self):
        return self.theta_hat[self.layout.intercept_slice]

    @property
    def zeta_hat(self):
        return self.theta_hat[self.layout.zeta_slice]


class _Reparam:
    """Map between natural parameters and the optimizer's coordinates."""

    def __init__(self, layout, S=None):
        self.layout = layout
        self.S = S
        n = layout.n
        # vech ordering (column-major lower triangle) of the (row, col) pairs
        cols, rows = np.triu_indices(n)
        self.vech_rows, self.vech_cols = rows, cols
        self.diag_pos = np.flatnonzero(rows == cols)

    @property
    def size(self):
        lay = self.layout
        return lay.size - lay.n_intercept if lay.vt else lay.size

    def bounds(self):
        b = [(None, None)] * self.size
        for i in range(self.layout.n_nu):
            b[self.size - self.layout.n_nu + i] = (-ETA_BOUND, ETA_BOUND)
        return b

    def to_x(self, theta):
        lay = self.layout
        n = lay.n
        nu = theta[lay.nu_slice]
        eta = np.clip(np.log(nu - n - 1), -ETA_BOUND, ETA_BOUND)
        coefs = theta[lay.coef_slice]
        if lay.vt:
            return np.concatenate([coefs, eta])
        L = np.linalg.cholesky(unvech(theta[lay.intercept_slice], n))
        head = L[self.vech_rows, self.vech_cols].copy()
        head[self.diag_pos] = np.log(head[self.diag_pos])
        return np.concatenate([head, coefs, eta])

    def _L(self, x):
        n = self.layout.n
        head = np.array(x[: self.layout.n_intercept], dtype=float)
        head[self.diag_pos] = np.exp(head[self.diag_pos])
        L = np.zeros((n, n))
        L[self.vech_rows, self.vech_cols] = head
        return L

    def to_theta(self, x):
        lay = self.layout
        n = lay.n
        x = np.asarray(x, dtype=float)
        nu = n + 1 + np.exp(x[-lay.n_nu :])
        if lay.vt:
            return np.concatenate([vec(self.S), x[: -lay.n_nu], nu])
        L = self._L(x)
        body = x[lay.n_intercept : -lay.n_nu]
        return np.concatenate([vech(L @ L.T), body, nu])

    def grad_x(self, x, g):
        """Chain rule from a natural-coordinate gradient ``g``."""
        lay = self.layout
        n = lay.n
        gnu = g[lay.nu_slice] * np.exp(x[-lay.n_nu :])
        body = g[lay.coef_slice]
        if lay.vt:
            return np.concatenate([body, gnu])
        gh = g[lay.intercept_slice]
        dC = unvech(gh, n)
        dC = dC - 0.5 * (dC - np.diag(np.diag(dC)))  # halve the doubled off-diagonal
        L = self._L(x)
        dL = 2.0 * dC @ L
        head = dL[self.vech_rows, self.vech_cols].copy()
        head[self.diag_pos] *= np.diag(L)
        return np.concatenate([head, body, gnu])


def start_theta(layout, Y):
    """Moment-matched starting values for the optimizer (natural coordinates)."""
    n = layout.n
    Ybar = Y.mean(axis=0)
    has_arch = layout.n_arch > 0
    has_garch = layout.n_garch > 0
    share = 0.6 if layout.har else 0.3
    eye = np.ones(n) if layout.diagonal else vec(np.eye(n))

    def blocks(count, lags, weights):
        # lag-one blocks carry the persistence share; longer lags start small but
        # nonzero because the likelihood is flat in a coefficient held at zero
        out = []
        for b in range(count):
            k, lag = divmod(b, lags)
            scale = np.sqrt(share * weights[k]) if lag == 0 else 0.1
            out.append(scale * eye)
        return out

    if layout.har:
        arch = [np.sqrt(share / 3.0) * eye for _ in range(3)]
        garch = []
    else:
        w = 0.5 ** np.arange(layout.K)
        w = w / w.sum()
        arch = blocks(layout.n_arch, layout.P, w)
        garch = blocks(layout.n_garch, layout.Q, w)
    frac = 1.0 - share * has_arch - (0.0 if layout.har else share * has_garch)
    nu0 = max(2.0 * n, n + 3.0)
    nu = [nu0] * layout.n_nu
    head = vec(Ybar) if layout.vt else vech(frac * Ybar)
    theta = np.concatenate([head] + arch + garch + [np.asarray(nu)])
    if layout.vt:
        theta = _shrink_to_feasible(layout, theta)
    return theta


def _shrink_to_feasible(layout, theta, factor=0.8, max_steps=60):
    """Shrink coefficients toward zero until the implied VT intercept is positive definite."""
    theta = theta.copy()
    for _ in range(max_steps):
        C = layout.implied_omega(theta)
        if np.linalg.eigvalsh(C)[0] > 1e-3 * np.trace(C) / layout.n:
            return theta
        theta[layout.coef_slice] *= factor
    raise FitError("no feasible variance-targeting start: implied intercept is never positive definite")


def fd_jacobian(fun, theta, idx=None, steps=None):
    """Central finite-difference Jacobian of a vector function in the coordinates ``idx``."""
    theta = np.asarray(theta, dtype=float)
    idx = np.arange(theta.size) if idx is None else np.asarray(idx)
    cols = []
    for k, i in enumerate(idx):
        h = _FD_STEP * max(abs(theta[i]), 1.0) if steps is None else steps[k]
        e = np.zeros_like(theta)
        e[i] = h
        cols.append((np.asarray(fun(theta + e)) - np.asarray(fun(theta - e))) / (2.0 * h))
    return np.stack(cols, axis=-1)


def _gradient(obj, theta):
    F, g = obj.value_and_grad(theta)
    if g is None:
        raise FitError("gradient requested at an infeasible parameter value")
    return g


def _robust_inverse(H, name="Hessian", cond_limit=1e12):
    """Inverse of a symmetric matrix, falling back to a pseudo-inverse when singular."""
    H = 0.5 * (H + H.T)
    w = np.linalg.eigvalsh(H)
    singular = not (w[0] > 0 and w[-1] / w[0] < cond_limit)
    if singular:
        warnings.warn(f"{name} is singular or indefinite; using a pseudo-inverse", SingularCovarianceWarning)
        return np.linalg.pinv(H, hermitian=True), True
    return np.linalg.inv(H), False


def _newton_polish(obj, theta, layout, tol, steps, free):
    """A few damped Newton steps on the free coordinates using an FD Hessian."""
    F, g = obj.value_and_grad(theta)
    for _ in range(steps):
        if np.max(np.abs(g[free])) <= tol:
            break
        H = fd_jacobian(lambda t: _gradient(obj, t)[free], theta, idx=free)
        H = 0.5 * (H + H.T)
        try:
            step = np.linalg.solve(H, g[free])
        except np.linalg.LinAlgError:
            break
        improved = False
        for damp in (1.0, 0.5, 0.25, 0.125):
            cand = theta.copy()
            cand[free] -= damp * step
            nu = cand[layout.nu_slice]
            if np.any(nu <= layout.n + 1):
                continue
            F2, g2 = obj.value_and_grad(cand)
            if g2 is not None and F2 <= F + 1e-12 * max(1.0, abs(F)):
                theta, F, g, improved = cand, F2, g2, True
                break
        if not improved:
            break
    return theta, F, g


def _optimize(obj, layout, theta0, rep, opts, free):
    """L-BFGS-B from ``theta0`` with jittered restarts; returns the best solution."""
    rng = make_rng(opts.seed, task=0)
    x0 = rep.to_x(theta0)

    def fun(x):
        theta = rep.to_theta(x)
        F, g = obj.value_and_grad(theta)
        if g is None:
            return PENALTY, np.zeros_like(x)
        return F, rep.grad_x(x, g)

    best = None
    total_iter = 0
    for attempt in range(1 + opts.n_restarts):
        start = x0 if attempt == 0 else x0 + opts.jitter * rng.standard_normal(x0.size)
        start[-layout.n_nu :] = np.clip(start[-layout.n_nu :], -ETA_BOUND, ETA_BOUND)
        res = minimize(fun, start, jac=True, method="L-BFGS-B", bounds=rep.bounds(),
                       options=dict(maxiter=opts.max_iter, ftol=1e-15, gtol=0.1 * opts.grad_tol,
                                    maxcor=20))
        total_iter += int(res.nit)
        theta = rep.to_theta(res.x)
        if obj(theta) >= PENALTY:
            continue
        theta, F, g = _newton_polish(obj, theta, layout, opts.grad_tol, opts.newton_steps, free)
        gnorm = float(np.max(np.abs(g[free])))
        converged = gnorm <= opts.grad_tol * max(1.0, abs(F))
        logger.debug("start %d: F=%.10g |g|=%.3g iterations=%d", attempt, F, gnorm, res.nit)
        if best is None or F < best[1] - 1e-12:
            best = (theta, F, gnorm, converged)
        if converged:
            break
    if best is None:
        raise FitError("optimizer never reached a feasible point")
    theta, F, gnorm, converged = best
    if not converged:
        warnings.warn(f"optimizer did not reach grad_tol (|g| = {gnorm:.3g})", ConvergenceWarning)
    return theta, F, gnorm, converged, total_iter, attempt + 1


def _prepare(Y, layout, init, opts):
    Y = check_series(Y)
    if Y.shape[1] != layout.n:
        raise ValueError(f"series dimension {Y.shape[1]} does not match layout dimension {layout.n}")
    if Y.shape[0] <= opts.min_obs_factor * layout.size:
        raise ValueError(
            f"T = {Y.shape[0]} is too short for {layout.size} parameters "
            f"(need T > {opts.min_obs_factor:g} x parameters)"
        )
    return Y, make_init(Y, layout, init)


def fit_mle(Y, orders=(1, 1, 1), structure="full", family="matrix_f", har=False, init=None,
            opts=None, theta0=None):
    """Full maximum likelihood estimation of a CBF (or CBF-HAR) model.

    Parameters
    ----------
    Y : array_like, shape (T, n, n)
        Realized covariance matrices.
    orders : tuple
        ``(P, Q, K)``; ignored when ``har`` is set.
    structure : {"full", "diagonal"}
    family : {"matrix_f", "wishart"}
        ``"wishart"`` is the ``nu2 -> inf`` limit (CAW likelihood).
    har : bool
    init : InitState, optional
        Pre-sample values; the sample mean is repeated by default.
    opts : FitOptions, optional
    theta0 : array, optional
        Starting value in natural coordinates.

    Returns
    -------
    FitResult
    """
    opts = opts or FitOptions()
    P, Q, K = orders
    layout = ParamLayout(np.shape(Y)[-1], P, Q, K, structure, family, har=har)
    Y, init = _prepare(Y, layout, init, opts)
    obj = Objective(layout, Y, init)
    theta0 = start_theta(layout, Y) if theta0 is None else np.asarray(theta0, dtype=float)
    free = np.arange(layout.size)
    theta, F, gnorm, conv, nit, nstarts = _optimize(obj, layout, theta0, _Reparam(layout), opts, free)
    theta = layout.canonicalize(theta)
    fit = FitResult(layout.unpack(theta), theta, layout, F, conv, nit, gnorm, Y.shape[0], init,
                    n_starts=nstarts)
    if opts.compute_cov:
        asymp_cov_mle(fit, Y, obj=obj)
    return fit


def fit_vt(Y, orders=(1, 1, 1), structure="full", family="matrix_f", har=False, init=None,
           opts=None, theta0=None):
    """Two-step variance-targeting estimator.

    Step one sets ``S_hat`` to the sample mean of ``Y``; step two minimises
    the likelihood over the coefficients and ``nu`` with the intercept
    ``S - sum A S A' - sum B S B'`` kept positive definite by a log barrier.
    Arguments mirror :func:`fit_mle`.

    Returns
    -------
    VtFitResult
    """
    opts = opts or FitOptions()
    P, Q, K = orders
    layout = ParamLayout(np.shape(Y)[-1], P, Q, K, structure, family, har=har, vt=True)
    Y, init = _prepare(Y, layout, init, opts)
    S = Y.mean(axis=0)
    obj = Objective(layout, Y, init)
    if theta0 is None:
        theta0 = start_theta(layout, Y)
    else:
        theta0 = np.asarray(theta0, dtype=float).copy()
        theta0[layout.intercept_slice] = vec(S)
        theta0 = _shrink_to_feasible(layout, theta0)
    free = np.arange(layout.n_intercept, layout.size)
    theta, F, gnorm, conv, nit, nstarts = _optimize(obj, layout, theta0, _Reparam(layout, S), opts, free)
    theta = layout.canonicalize(theta)
    fit = VtFitResult(layout.unpack(theta), theta, layout, F, conv, nit, gnorm, Y.shape[0], init,
                      n_starts=nstarts, omega_hat=layout.implied_omega(theta))
    if opts.compute_cov:
        asymp_cov_vt(fit, Y, obj=obj)
    return fit


def _objective_for(fit, Y, obj=None):
    if obj is not None:
        return obj
    Y = check_series(Y)
    return Objective(fit.layout, Y, make_init(Y, fit.layout, fit.init))


def asymp_cov_mle(fit, Y, obj=None):
    """Fill ``fit.hessian``, ``fit.cov`` (= Hessian^{-1} / T) and ``fit.std_errors``."""
    obj = _objective_for(fit, Y, obj)
    H = fd_jacobian(lambda t: _gradient(obj, t), fit.theta_hat)
    H = 0.5 * (H + H.T)
    Hinv, singular = _robust_inverse(H)
    fit.hessian = H
    fit.cov = Hinv / obj.T
    fit.cov_singular = singular
    fit.std_errors = np.sqrt(np.clip(np.diag(fit.cov), 0.0, None))
    return fit.cov


def per_period_scores(obj, theta, idx=None):
    """``d l_t / d theta_i`` for every period, shape ``(T, len(idx))``, by central differences."""
    return fd_jacobian(obj.per_period, theta, idx=idx)


def persistence_operators(layout, theta):
    """``(sum_i A_i*, sum_j B_j*)`` as ``n^2 x n^2`` matrices."""
    _, arch, garch, _ = layout.split(theta)
    m = layout.n**2

    def star(c):
        M = np.diag(c) if c.ndim == 1 else c
        return np.kron(M, M)

    A = sum((star(c) for c in arch), np.zeros((m, m)))
    B = sum((star(c) for c in garch), np.zeros((m, m)))
    return A, B


def vt_psi(layout, theta):
    """``Psi = (I - sum A* - sum B*)^{-1} (I - sum B*)``."""
    A, B = persistence_operators(layout, theta)
    eye = np.eye(layout.n**2)
    return np.linalg.solve(eye - A - B, eye - B)


def asymp_cov_vt(fit, Y, obj=None):
    """Sandwich covariance of ``(vec(S_hat), zeta_hat)`` for a VT fit.

    With ``w_t = (Psi vec(Y_t - Sigma_t), dl_t/dzeta)``, ``J1`` the
    ``zeta``-Hessian and ``J2`` the cross derivative in ``s``:
    ``O_v = M E[w w'] M'`` with ``M = [[I, 0], [-J1^{-1} J2, -J1^{-1}]]``.
    """
    obj = _objective_for(fit, Y, obj)
    layout = fit.layout
    theta = fit.theta_hat
    zs, ss = layout.zeta_slice, layout.intercept_slice
    zeta_idx = np.arange(layout.size)[zs]
    s_idx = np.arange(layout.size)[ss]
    grad_z = lambda t: _gradient(obj, t)[zs]  # noqa: E731
    J1 = fd_jacobian(grad_z, theta, idx=zeta_idx)
    J1 = 0.5 * (J1 + J1.T)
    J2 = fd_jacobian(grad_z, theta, idx=s_idx)
    J1inv, singular = _robust_inverse(J1, "J1")
    Psi = vt_psi(layout, theta)
    Sigma = obj.sigma(theta)
    eta = (obj.Y - Sigma).reshape(obj.T, -1, order="F") @ Psi.T
    scores = per_period_scores(obj, theta, zeta_idx)
    w = np.hstack([eta, scores])
    Eww = w.T @ w / obj.T
    m, d = s_idx.size, zeta_idx.size
    Mt = np.zeros((m + d, m + d))
    Mt[:m, :m] = np.eye(m)
    Mt[m:, :m] = -J1inv @ J2
    Mt[m:, m:] = -J1inv
    Ov = Mt @ Eww @ Mt.T
    Ov = 0.5 * (Ov + Ov.T)
    fit.J1, fit.J2, fit.Eww, fit.Psi, fit.transform = J1, J2, Eww, Psi, Mt
    fit.hessian = J1
    fit.cov = Ov / obj.T
    fit.cov_singular = singular
    fit.std_errors = np.sqrt(np.clip(np.diag(fit.cov), 0.0, None))
    return fit.cov


def implied_omega_se(fit, Y=None):
    """Delta-method standard errors of ``vech`` of the VT implied intercept."""
    layout = fit.layout
    J = fd_jacobian(lambda t: vech(layout.implied_omega(t)), fit.theta_hat)
    return np.sqrt(np.clip(np.diag(J @ fit.cov @ J.T), 0.0, None))
