"""Parameter layouts and the CBF negative log-likelihood with its adjoint gradient.

The natural parameter vector is laid out as

* ``vech(Omega)`` (full MLE) or ``vec(S)`` (variance targeting, ``S`` the
  unconditional mean),
* one block per ARCH coefficient, ``k``-major and lag-inner for CBF specs or
  ``(A_d, A_w, A_m)`` for HAR specs, each block ``vec(A)`` or ``diag(A)``,
* one block per GARCH coefficient, same ordering,
* ``(nu1, nu2)``, or ``nu1`` alone for the Wishart family.

The gradient is computed by reverse-mode differentiation through the Sigma
recursion: the adjoint ``Lam_t = G_t + sum_j B_j' Lam_{t+j} B_j`` of the
per-period gradients ``G_t = d l_t / d Sigma_t`` gives every block in one
backward pass.  Pre-sample values are treated as constants.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import multigammaln

from . import recursion
from .distributions import ln_multigamma, multidigamma
from .matalg import spd_inv_logdet, symmetrize, unvec, unvech, vec, vech
from .model import CbfSpec, HarSpec, InitState

logger = logging.getLogger(__name__)

FAMILIES = ("matrix_f", "wishart")
PENALTY = 1e10


def _normalize_family(family):
    family = family.replace("-", "_").lower()
    if family == "caw":
        family = "wishart"
    if family not in FAMILIES:
        raise ValueError(f"family must be one of {FAMILIES}, got {family!r}")
    return family


@dataclass(frozen=True)
class ParamLayout:
    """Layout of the flat parameter vector for a model class.

    Parameters
    ----------
    n : int
        Matrix dimension.
    P, Q, K : int
        BEKK orders.  Ignored for ``har=True`` (three ARCH terms, no GARCH).
    structure : {"full", "diagonal"}
    family : {"matrix_f", "wishart"}
    har : bool
        Use the daily/weekly/monthly HAR regressors.
    vt : bool
        Variance targeting: the intercept block is ``vec(S)`` instead of
        ``vech(Omega)``.
    """

    n: int
    P: int = 1
    Q: int = 1
    K: int = 1
    structure: str = "full"
    family: str = "matrix_f"
    har: bool = False
    vt: bool = False

    def __post_init__(self):
        object.__setattr__(self, "family", _normalize_family(self.family))
        if self.structure not in ("full", "diagonal"):
            raise ValueError("structure must be 'full' or 'diagonal'")
        if self.har:
            object.__setattr__(self, "P", 3)
            object.__setattr__(self, "Q", 0)
            object.__setattr__(self, "K", 1)
        if self.n < 1 or min(self.P, self.Q) < 0 or self.K < 1:
            raise ValueError("invalid orders")

    @property
    def diagonal(self):
        return self.structure == "diagonal"

    @property
    def coef_size(self):
        return self.n if self.diagonal else self.n * self.n

    @property
    def n_arch(self):
        return 3 if self.har else self.K * self.P

    @property
    def n_garch(self):
        return 0 if self.har else self.K * self.Q

    @property
    def n_intercept(self):
        return self.n * self.n if self.vt else self.n * (self.n + 1) // 2

    @property
    def n_nu(self):
        return 1 if self.family == "wishart" else 2

    @property
    def size(self):
        return self.n_intercept + (self.n_arch + self.n_garch) * self.coef_size + self.n_nu

    @property
    def M(self):
        return 22 if self.har else max(self.P, self.Q, 1)

    @property
    def intercept_slice(self):
        return slice(0, self.n_intercept)

    @property
    def coef_slice(self):
        return slice(self.n_intercept, self.size - self.n_nu)

    @property
    def nu_slice(self):
        return slice(self.size - self.n_nu, self.size)

    @property
    def zeta_slice(self):
        """Everything except the intercept block (the VT second-step parameters)."""
        return slice(self.n_intercept, self.size)

    def arch_lags(self):
        """Regressor index (0-based) of each ARCH block in layout order."""
        if self.har:
            return [0, 1, 2]
        return [i for _ in range(self.K) for i in range(self.P)]

    def garch_lags(self):
        return [j + 1 for _ in range(self.K) for j in range(self.Q)]

    def names(self):
        """Human-readable parameter labels in layout order."""
        n = self.n
        out = []
        if self.vt:
            out += [f"S[{p + 1},{q + 1}]" for q in range(n) for p in range(n)]
        else:
            out += [f"Omega[{p + 1},{q + 1}]" for q in range(n) for p in range(q, n)]

        def block(label):
            if self.diagonal:
                return [f"{label}[{p + 1},{p + 1}]" for p in range(n)]
            return [f"{label}[{p + 1},{q + 1}]" for q in range(n) for p in range(n)]

        if self.har:
            for label in ("A_d", "A_w", "A_m"):
                out += block(label)
        else:
            for k in range(self.K):
                for i in range(self.P):
                    out += block(f"A{k + 1}{i + 1}")
            for k in range(self.K):
                for j in range(self.Q):
                    out += block(f"B{k + 1}{j + 1}")
        out += ["nu1"] if self.n_nu == 1 else ["nu1", "nu2"]
        return out

    # ---- conversion --------------------------------------------------------
    def _coef_to_vec(self, M):
        return np.diag(M).copy() if self.diagonal else vec(M)

    def _vec_to_coef(self, v):
        return np.diag(v) if self.diagonal else unvec(v, self.n)

    def split(self, theta):
        """Return ``(intercept_matrix, arch_coefs, garch_coefs, nu)`` without validation.

        Coefficients come back as length-``n`` vectors (diagonal structure)
        or ``(n, n)`` matrices.
        """
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.size,):
            raise ValueError(f"theta must have length {self.size}, got {theta.shape}")
        n = self.n
        head = theta[self.intercept_slice]
        C = symmetrize(unvec(head, n)) if self.vt else unvech(head, n)
        cs = self.coef_size
        coefs = theta[self.coef_slice].reshape(-1, cs)
        if not self.diagonal:
            coefs = [unvec(c, n) for c in coefs]
        else:
            coefs = list(coefs)
        arch = coefs[: self.n_arch]
        garch = coefs[self.n_arch :]
        nu = theta[self.nu_slice]
        nu = (nu[0], np.inf) if self.n_nu == 1 else (nu[0], nu[1])
        return C, arch, garch, nu

    def _full(self, c):
        return np.diag(c) if self.diagonal else c

    def implied_omega(self, theta):
        """Intercept ``Omega`` implied by ``theta`` (for VT layouts: ``S - sum ASA' - sum BSB'``)."""
        C, arch, garch, _ = self.split(theta)
        if not self.vt:
            return C
        return C - sum((recursion.sandwich(c, C) for c in arch + garch), np.zeros_like(C))

    def unpack(self, theta):
        """Build the validated :class:`CbfSpec` or :class:`HarSpec` for ``theta``."""
        _, arch, garch, nu = self.split(theta)
        Omega = self.implied_omega(theta)
        arch = [self._full(c) for c in arch]
        garch = [self._full(c) for c in garch]
        if self.har:
            return HarSpec(Omega, *arch, nu=nu, structure=self.structure)
        n = self.n
        A = np.array(arch).reshape(self.K, self.P, n, n)
        B = np.array(garch).reshape(self.K, self.Q, n, n)
        return CbfSpec(Omega, A, B, nu, self.structure)

    def pack(self, spec, S=None):
        """Flatten a spec; VT layouts also need the targeted mean ``S``."""
        if isinstance(spec, HarSpec) != self.har:
            raise ValueError("spec type does not match layout")
        if self.vt:
            if S is None:
                raise ValueError("variance-targeting layouts need S")
            head = vec(np.asarray(S, dtype=float))
        else:
            head = vech(spec.Omega)
        if self.har:
            arch = [spec.A_d, spec.A_w, spec.A_m]
            garch = []
        else:
            if spec.A.shape[:2] != (self.K, self.P) or spec.B.shape[1] != self.Q:
                raise ValueError("spec orders do not match layout")
            arch = [A for _, _, A in spec.arch_terms()]
            garch = [B for _, _, B in spec.garch_terms()]
        body = [self._coef_to_vec(M) for M in arch + garch]
        nu = [spec.nu[0]] if self.n_nu == 1 else list(spec.nu)
        return np.concatenate([head] + body + [np.asarray(nu, dtype=float)])

    def canonicalize(self, theta):
        """Flip coefficient blocks whose largest-magnitude diagonal element is negative."""
        theta = np.array(theta, dtype=float)
        cs = self.coef_size
        start = self.n_intercept
        for b in range(self.n_arch + self.n_garch):
            blk = slice(start + b * cs, start + (b + 1) * cs)
            d = theta[blk] if self.diagonal else theta[blk][:: self.n + 1]
            if not np.any(d):
                d = theta[blk]
            if d[np.argmax(np.abs(d))] < 0:
                theta[blk] = -theta[blk]
        return theta


class Objective:
    """Average negative log-likelihood ``(1/T) sum l_t`` of a series under a layout.

    Parameters
    ----------
    layout : ParamLayout
    Y : array, shape (T, n, n)
    init : InitState
    """

    def __init__(self, layout, Y, init, barrier_margin=1e-3, barrier_weight=1e-2):
        self.layout = layout
        self.Y = Y
        self.T, self.n = Y.shape[0], Y.shape[1]
        if init.M < layout.M:
            raise ValueError(f"initial state holds {init.M} matrices, recursion needs {layout.M}")
        self.init = init
        if layout.har:
            self.R = recursion.har_regressors(Y, init.Y_init)
        elif layout.P:
            self.R = recursion.lag_regressors(Y, init.Y_init, layout.P)
        else:
            self.R = np.zeros((0,) + Y.shape)
        self.logdetY = spd_inv_logdet(Y)[1]
        self.barrier_margin = barrier_margin
        self.barrier_weight = barrier_weight
        self._arch_idx = layout.arch_lags()
        self._garch_lags = layout.garch_lags()

    # ---- forward pieces ------------------------------------------------------
    def intercept(self, theta):
        C, arch, garch, _ = self.layout.split(theta)
        if self.layout.vt:
            return self.layout.implied_omega(theta)
        return C

    def sigma(self, theta):
        """Sigma path at ``theta`` (no positive-definiteness check)."""
        _, arch, garch, _ = self.layout.split(theta)
        C = self.intercept(theta)
        return self._sigma(C, arch, garch)

    def _sigma(self, C, arch, garch):
        X = C + sum(recursion.sandwich(a, self.R[r]) for a, r in zip(arch, self._arch_idx))
        if not arch:
            X = np.broadcast_to(C, self.Y.shape).copy()
        return recursion.garch_filter(X, list(zip(garch, self._garch_lags)), self.init.Sigma_init,
                                      self.layout.diagonal)

    def _family_terms(self, Sigma, nu, need_grad):
        """Per-period ``l_t``, ``G_t = dl_t/dSigma_t`` and ``dl_t/dnu``."""
        n = self.n
        nu1, nu2 = nu
        Y = self.Y
        Sinv, ldS = spd_inv_logdet(Sigma)
        if np.isinf(nu2):
            tr = np.einsum("tij,tji->t", Sinv, Y)
            const = n * nu1 / 2 * np.log(2.0) + multigammaln(nu1 / 2, n)
            l = nu1 / 2 * (ldS - n * np.log(nu1)) - (nu1 - n - 1) / 2 * self.logdetY + nu1 / 2 * tr + const
            if not need_grad:
                return l, None, None
            G = nu1 / 2 * (Sinv - Sinv @ Y @ Sinv)
            dnu1 = (0.5 * ldS - n / 2 * np.log(nu1) - n / 2 - 0.5 * self.logdetY + 0.5 * tr
                    + n / 2 * np.log(2.0) + 0.5 * multidigamma(n, nu1 / 2))
            return l, G, dnu1[:, None]
        c = (nu2 - n - 1) / nu1
        W = Sigma + Y / c
        Winv, ldW = spd_inv_logdet(W)
        const = (-ln_multigamma(n, (nu1 + nu2) / 2) + ln_multigamma(n, nu1 / 2)
                 + ln_multigamma(n, nu2 / 2))
        l = (n * nu1 / 2 * np.log(c) - nu2 / 2 * ldS + (nu1 + nu2) / 2 * ldW
             - (nu1 - n - 1) / 2 * self.logdetY + const)
        if not need_grad:
            return l, None, None
        G = -nu2 / 2 * Sinv + (nu1 + nu2) / 2 * Winv
        q = np.einsum("tij,tji->t", Winv, Y) / c
        psi_sum = multidigamma(n, (nu1 + nu2) / 2)
        d1 = (n / 2 * np.log(c) - n / 2 + 0.5 * ldW + (nu1 + nu2) / (2 * nu1) * q
              - 0.5 * self.logdetY - 0.5 * psi_sum + 0.5 * multidigamma(n, nu1 / 2))
        d2 = (n * nu1 / (2 * (nu2 - n - 1)) - 0.5 * ldS + 0.5 * ldW
              - (nu1 + nu2) / (2 * (nu2 - n - 1)) * q - 0.5 * psi_sum + 0.5 * multidigamma(n, nu2 / 2))
        return l, G, np.column_stack([d1, d2])

    def _barrier(self, C):
        """Log barrier keeping the implied intercept positive definite (VT only).

        Returns ``(value, d value / d C)``; ``value`` is inf when ``C`` is not PD.
        """
        w, U = np.linalg.eigh(C)
        margin = self.barrier_margin * max(np.trace(C), 1e-300) / self.n
        if w[0] <= 0:
            return np.inf, None
        if w[0] >= margin:
            return 0.0, np.zeros_like(C)
        u = U[:, 0]
        val = -self.barrier_weight * np.log(w[0] / margin)
        return val, -self.barrier_weight / w[0] * np.outer(u, u)

    # ---- public evaluation --------------------------------------------------
    def per_period(self, theta):
        """Vector of ``l_t`` at ``theta`` (no barrier term)."""
        _, arch, garch, nu = self.layout.split(theta)
        Sigma = self._sigma(self.intercept(theta), arch, garch)
        return self._family_terms(Sigma, nu, False)[0]

    def __call__(self, theta):
        return self.value_and_grad(theta, need_grad=False)[0]

    def value_and_grad(self, theta, need_grad=True):
        """Objective value and gradient in natural coordinates.

        Infeasible points (non-PD implied intercept, overflow, or a Sigma_t
        that is not positive definite) return ``(PENALTY, None)``.
        """
        layout = self.layout
        S_or_Om, arch, garch, nu = layout.split(theta)
        bval, bgrad = 0.0, None
        if layout.vt:
            C = layout.implied_omega(theta)
            bval, bgrad = self._barrier(C)
            if not np.isfinite(bval):
                return PENALTY, None
        else:
            C = S_or_Om
        try:
            with np.errstate(all="ignore"):
                Sigma = self._sigma(C, arch, garch)
                if not np.all(np.isfinite(Sigma)):
                    return PENALTY, None
                l, G, dnu = self._family_terms(Sigma, nu, need_grad)
        except np.linalg.LinAlgError:
            return PENALTY, None
        F = float(np.mean(l)) + bval
        if not np.isfinite(F):
            return PENALTY, None
        if not need_grad:
            return F, None

        T = self.T
        Lam = recursion.garch_adjoint(G / T, list(zip(garch, self._garch_lags)), layout.diagonal)
        Lam_tot = Lam.sum(axis=0)
        dC = Lam_tot if bgrad is None else Lam_tot + bgrad
        grads = []
        for a, r in zip(arch, self._arch_idx):
            grads.append(self._coef_grad(a, Lam, self.R[r]))
        for b, j in zip(garch, self._garch_lags):
            lagged = recursion.shifted_sigma(Sigma, self.init.Sigma_init, j)
            grads.append(self._coef_grad(b, Lam, lagged))
        if layout.vt:
            S = S_or_Om
            dS = dC.copy()
            for i, a in enumerate(arch + garch):
                if layout.diagonal:
                    grads[i] = grads[i] - 2.0 * (dC * S) @ a
                    dS -= np.outer(a, a) * dC
                else:
                    grads[i] = grads[i] - 2.0 * dC @ a @ S
                    dS -= a.T @ dC @ a
            head = vec(dS)
        else:
            head = vech(2.0 * dC - np.diag(np.diag(dC)))
        body = [g if layout.diagonal else vec(g) for g in grads]
        gnu = dnu.mean(axis=0)
        grad = np.concatenate([head] + body + [gnu])
        return F, grad

    @staticmethod
    def _coef_grad(coef, Lam, R):
        """Gradient of ``sum_t tr(Lam_t coef R_t coef')`` in ``coef``."""
        if coef.ndim == 1:
            return 2.0 * np.einsum("tpq,tpq->pq", Lam, R) @ coef
        return 2.0 * (Lam @ coef @ R).sum(axis=0)


def make_init(Y, layout, init=None):
    """Default pre-sample state: the sample mean repeated ``M`` times."""
    if init is not None:
        return init
    return InitState.constant(np.mean(Y, axis=0), layout.M)


def numeric_grad(f, theta, rel_step=None):
    """Central finite-difference gradient of a scalar function."""
    theta = np.asarray(theta, dtype=float)
    h0 = np.cbrt(np.finfo(float).eps) if rel_step is None else rel_step
    g = np.empty_like(theta)
    for i in range(theta.size):
        h = h0 * max(abs(theta[i]), 1.0)
        e = np.zeros_like(theta)
        e[i] = h
        g[i] = (f(theta + e) - f(theta - e)) / (2 * h)
    return g


def grad_check(theta, Y, layout, init=None):
    """Max of ``|analytic - central FD| / (1 + |central FD|)`` over coordinates."""
    obj = Objective(layout, Y, make_init(Y, layout, init))
    F, g = obj.value_and_grad(theta)
    if g is None:
        raise ValueError("theta is outside the feasible region")
    fd = numeric_grad(obj, theta)
    return float(np.max(np.abs(g - fd) / (1.0 + np.abs(fd))))
