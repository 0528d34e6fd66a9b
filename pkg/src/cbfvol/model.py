"""CBF and CBF-HAR model specifications, the Sigma recursion, moments, simulation."""

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import recursion
from .distributions import make_rng, moment_coefficients, sample_innovations
from .exceptions import MomentConditionError, NotStationaryError, StationarityWarning
from .matalg import check_spd, commutation_matrix, is_spd, spectral_radius, sqrtm_spd, symmetrize, unvec, vec
from .validation import check_dof, check_series

STRUCTURES = ("full", "diagonal")


def _canonical_sign(M):
    """Flip ``M`` so that its largest-magnitude diagonal entry is positive.

    ``M`` and ``-M`` give the same model.  Keying on the largest entry rather
    than the first keeps the choice stable when ``M[0, 0]`` is near zero.  A
    matrix with a zero diagonal is keyed on its largest entry overall.
    """
    d = np.diag(M) if np.any(np.diag(M)) else M.ravel()
    return -M if d[np.argmax(np.abs(d))] < 0 else M


def _as_coef_stack(A, n, name):
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return A.reshape(1, 0, n, n) if A.ndim < 4 else A
    if A.ndim == 2:
        A = A[None, None]
    elif A.ndim == 3:
        A = A[None]
    if A.ndim != 4 or A.shape[2:] != (n, n):
        raise ValueError(f"{name} must have shape (K, lags, n, n), got {A.shape}")
    return A


def _is_diagonal(M):
    return np.all(M == np.diag(np.diag(M)))


@dataclass
class CbfSpec:
    """A CBF model: ``Sigma_t = Omega + sum A_ki Y_{t-i} A_ki' + sum B_kj Sigma_{t-j} B_kj'``.

    ``A`` has shape ``(K, P, n, n)`` and ``B`` shape ``(K, Q, n, n)``; a 2-D or
    3-D array is promoted (single ``K`` and/or single lag).  ``nu = (nu1, nu2)``
    with ``nu2 = inf`` denoting the Wishart (CAW) limit.  Coefficient matrices
    are sign-canonicalized so their largest-magnitude diagonal entry is
    positive; the model is unchanged by this.
    """

    Omega: np.ndarray
    A: np.ndarray
    B: np.ndarray
    nu: tuple = (10.0, 10.0)
    structure: str = "full"

    def __post_init__(self):
        self.Omega = check_spd(self.Omega, "Omega")
        n = self.Omega.shape[0]
        A = _as_coef_stack(self.A, n, "A")
        B = _as_coef_stack(self.B, n, "B")
        if A.shape[0] != B.shape[0] and A.shape[1] and B.shape[1]:
            raise ValueError("A and B must share the same K")
        self.A = np.array([[_canonical_sign(m) for m in row] for row in A]).reshape(A.shape)
        self.B = np.array([[_canonical_sign(m) for m in row] for row in B]).reshape(B.shape)
        self.nu = check_dof(self.nu[0], self.nu[1], n)
        if self.structure not in STRUCTURES:
            raise ValueError(f"structure must be one of {STRUCTURES}")
        if self.structure == "diagonal":
            for M in list(self.A.reshape(-1, n, n)) + list(self.B.reshape(-1, n, n)):
                if not _is_diagonal(M):
                    raise ValueError("diagonal structure requires diagonal A and B")

    @property
    def n(self):
        return self.Omega.shape[0]

    @property
    def K(self):
        return max(self.A.shape[0] if self.P else 0, self.B.shape[0] if self.Q else 0, 1)

    @property
    def P(self):
        return self.A.shape[1]

    @property
    def Q(self):
        return self.B.shape[1]

    @property
    def M(self):
        return max(self.P, self.Q, 1)

    @property
    def family(self):
        return "wishart" if np.isinf(self.nu[1]) else "matrix_f"

    @classmethod
    def diagonal(cls, Omega, a=(), b=(), nu=(10.0, 10.0)):
        """Build a K=1 diagonal spec from per-lag diagonal vectors ``a[i]``, ``b[j]``."""
        Omega = np.asarray(Omega, dtype=float)
        n = Omega.shape[0]
        A = np.array([np.diag(v) for v in np.atleast_2d(a)]) if len(a) else np.zeros((0, n, n))
        B = np.array([np.diag(v) for v in np.atleast_2d(b)]) if len(b) else np.zeros((0, n, n))
        return cls(Omega, A[None], B[None], nu, "diagonal")

    def arch_terms(self):
        """Yield ``(k, i, A_ki)`` for every ARCH coefficient."""
        for k in range(self.A.shape[0]):
            for i in range(self.P):
                yield k, i + 1, self.A[k, i]

    def garch_terms(self):
        for k in range(self.B.shape[0]):
            for j in range(self.Q):
                yield k, j + 1, self.B[k, j]

    def a_star(self):
        """``A_i* = sum_k A_ki (x) A_ki`` for i = 1..M, shape ``(M, n^2, n^2)``."""
        out = np.zeros((self.M, self.n**2, self.n**2))
        for _, i, A in self.arch_terms():
            out[i - 1] += np.kron(A, A)
        return out

    def b_star(self):
        out = np.zeros((self.M, self.n**2, self.n**2))
        for _, j, B in self.garch_terms():
            out[j - 1] += np.kron(B, B)
        return out


@dataclass
class HarSpec:
    """CBF-HAR model: ``Sigma_t = Omega + A_d Y_d A_d' + A_w Y_w A_w' + A_m Y_m A_m'``
    with daily, 5-day and 22-day trailing averages of past ``Y``."""

    Omega: np.ndarray
    A_d: np.ndarray
    A_w: np.ndarray
    A_m: np.ndarray
    nu: tuple = (10.0, 10.0)
    structure: str = "full"

    def __post_init__(self):
        self.Omega = check_spd(self.Omega, "Omega")
        n = self.Omega.shape[0]
        mats = []
        for name in ("A_d", "A_w", "A_m"):
            M = np.asarray(getattr(self, name), dtype=float)
            if M.ndim == 1:
                M = np.diag(M)
            if M.shape != (n, n):
                raise ValueError(f"{name} must be {n}x{n}")
            mats.append(_canonical_sign(M))
        self.A_d, self.A_w, self.A_m = mats
        self.nu = check_dof(self.nu[0], self.nu[1], n)
        if self.structure not in STRUCTURES:
            raise ValueError(f"structure must be one of {STRUCTURES}")
        if self.structure == "diagonal" and not all(_is_diagonal(M) for M in mats):
            raise ValueError("diagonal structure requires diagonal A_d, A_w, A_m")

    @property
    def n(self):
        return self.Omega.shape[0]

    @property
    def M(self):
        return 22

    @property
    def family(self):
        return "wishart" if np.isinf(self.nu[1]) else "matrix_f"


@dataclass
class InitState:
    """Pre-sample values ``Y_{-M+1..0}`` and ``Sigma_{-M+1..0}`` in chronological order."""

    Y_init: np.ndarray
    Sigma_init: np.ndarray = field(default=None)

    def __post_init__(self):
        self.Y_init = np.asarray(self.Y_init, dtype=float)
        if self.Sigma_init is None:
            self.Sigma_init = self.Y_init.copy()
        self.Sigma_init = np.asarray(self.Sigma_init, dtype=float)
        if self.Y_init.ndim != 3 or self.Y_init.shape != self.Sigma_init.shape:
            raise ValueError("Y_init and Sigma_init must both have shape (M, n, n)")

    @classmethod
    def constant(cls, C, M):
        C = np.asarray(C, dtype=float)
        stack = np.repeat(C[None], M, axis=0)
        return cls(stack, stack.copy())

    @property
    def M(self):
        return self.Y_init.shape[0]


def default_init(spec_or_M, Y=None, n=None):
    """Initial state repeating the sample mean of ``Y`` (or the unconditional mean)."""
    M = spec_or_M if isinstance(spec_or_M, int) else spec_or_M.M
    if Y is not None:
        return InitState.constant(np.mean(Y, axis=0), M)
    return InitState.constant(unconditional_mean(spec_or_M), M)


def _check_init(init, M, n):
    if init.M < M:
        raise ValueError(f"initial state holds {init.M} matrices, recursion needs {M}")
    if init.Y_init.shape[1:] != (n, n):
        raise ValueError("initial state dimension does not match the model")


def _spd_or_raise(Sigma):
    if not is_spd(Sigma):
        raise ValueError("Sigma path lost positive definiteness; the specification is invalid")
    return Sigma


def sigma_path(spec, Y, init=None):
    """Conditional means ``Sigma_1..Sigma_T`` of a CBF spec filtered over ``Y``."""
    if isinstance(spec, HarSpec):
        return har_sigma_path(spec, Y, init)
    Y = check_series(Y, require_spd=False)
    if Y.shape[1] != spec.n:
        raise ValueError(f"series dimension {Y.shape[1]} does not match model dimension {spec.n}")
    init = init or default_init(spec.M, Y)
    _check_init(init, spec.M, spec.n)
    diag = spec.structure == "diagonal"
    _coef = (lambda M: np.diag(M).copy()) if diag else (lambda M: M)
    arch = []
    if spec.P:
        R = recursion.lag_regressors(Y, init.Y_init, spec.P)
        arch = [(_coef(A), R[i - 1]) for _, i, A in spec.arch_terms()]
    garch = [(_coef(B), j) for _, j, B in spec.garch_terms()]
    S = recursion.run(spec.Omega, arch, garch, init.Sigma_init, diag, T=Y.shape[0])
    return _spd_or_raise(S)


def har_sigma_path(spec, Y, init=None):
    Y = check_series(Y, require_spd=False)
    if Y.shape[1] != spec.n:
        raise ValueError(f"series dimension {Y.shape[1]} does not match model dimension {spec.n}")
    init = init or default_init(22, Y)
    _check_init(init, 22, spec.n)
    R = recursion.har_regressors(Y, init.Y_init)
    S = spec.Omega + sum(recursion.sandwich(A, R[m]) for m, A in enumerate((spec.A_d, spec.A_w, spec.A_m)))
    return _spd_or_raise(S)


def har_expand(spec):
    """Rewrite a HAR spec as the constrained CBF spec with P=22, K=3, Q=0."""
    n = spec.n
    A = np.zeros((3, 22, n, n))
    A[0, 0] = spec.A_d
    A[1, :5] = spec.A_w / np.sqrt(5.0)
    A[2, :] = spec.A_m / np.sqrt(22.0)
    return CbfSpec(spec.Omega, A, np.zeros((3, 0, n, n)), spec.nu, spec.structure)


def _as_cbf(spec):
    return har_expand(spec) if isinstance(spec, HarSpec) else spec


def persistence_operator(spec):
    """``sum_i (A_i* + B_i*)``, the companion sum entering (H3) and the mean."""
    if isinstance(spec, HarSpec):
        return sum(np.kron(A, A) for A in (spec.A_d, spec.A_w, spec.A_m))
    return spec.a_star().sum(axis=0) + spec.b_star().sum(axis=0)


def check_stationarity(spec):
    """Return ``(rho, stationary)`` for the condition rho(sum A* + B*) < 1."""
    rho = spectral_radius(persistence_operator(spec))
    return rho, rho < 1.0


def unconditional_mean(spec):
    rho, ok = check_stationarity(spec)
    if not ok:
        raise NotStationaryError(f"unconditional mean undefined: rho = {rho:.6g} >= 1")
    n = spec.n
    ybar = np.linalg.solve(np.eye(n * n) - persistence_operator(spec), vec(spec.Omega))
    return symmetrize(unvec(ybar, n))


def pi_kernel(nu, n):
    """Operator mapping ``vec(Sigma Sigma')`` to ``vec Var(vec Y | past)``."""
    s1, s2 = moment_coefficients(nu[0], nu[1], n)
    m = n * n
    K = commutation_matrix(n)
    perm = np.kron(np.kron(np.eye(n), K), np.eye(n))
    return (s1 - 1.0) * np.eye(m * m) + (s2 * np.kron(np.eye(m), np.eye(m) + K)) @ perm


def phi_weights(spec, tol=1e-12, max_terms=10_000):
    """MA(inf) weights ``Phi_i`` (i >= 1) of ``vec Y_t`` until ``||Phi_i|| <= tol``."""
    spec = _as_cbf(spec)
    a_star, b_star = spec.a_star(), spec.b_star()
    M = spec.M
    m = spec.n**2
    phis = [np.eye(m)]
    ab = a_star + b_star
    for i in range(1, max_terms + 1):
        phi = -b_star[i - 1] if i <= M else np.zeros((m, m))
        for j in range(1, min(i, M) + 1):
            phi = phi + ab[j - 1] @ phis[i - j]
        phis.append(phi)
        if i >= M and np.linalg.norm(phi) <= tol * np.linalg.norm(phis[0]):
            return phis[1:]
    raise NotStationaryError(f"Phi series did not converge within {max_terms} terms")


def second_moment(spec, tol=1e-12):
    """``E[vec(Y) vec(Y)']`` of a stationary CBF process, shape ``(n^2, n^2)``."""
    n = spec.n
    rho, ok = check_stationarity(spec)
    if not ok:
        raise NotStationaryError(f"second moment undefined: rho = {rho:.6g} >= 1")
    if not spec.nu[1] > n + 3:
        raise MomentConditionError(f"second moment requires nu2 > n + 3 = {n + 3}")
    m = n * n
    Pi = pi_kernel(spec.nu, n)
    ybar = vec(unconditional_mean(spec))
    acc = np.zeros((m * m, m * m))
    for phi in phi_weights(spec, tol=tol):
        acc += np.kron(phi, phi)
    op = acc @ Pi
    if spectral_radius(op) >= 1.0:
        raise NotStationaryError("second-moment operator has spectral radius >= 1")
    mvec = np.linalg.solve(np.eye(m * m) - op, np.kron(ybar, ybar))
    E = unvec((Pi + np.eye(m * m)) @ mvec, m)
    return symmetrize(E)


def persistence(spec, s):
    """Sum of squared own-asset coefficients for asset ``s`` (diagonal structure)."""
    if spec.structure != "diagonal":
        raise ValueError("persistence is defined for diagonal specifications")
    if isinstance(spec, HarSpec):
        return float(spec.A_d[s, s] ** 2 + spec.A_w[s, s] ** 2 + spec.A_m[s, s] ** 2)
    return float(np.sum(spec.A[:, :, s, s] ** 2) + np.sum(spec.B[:, :, s, s] ** 2))


def simulate(spec, T, burnin=500, rng=None, init=None):
    """Simulate ``T`` observations ``Y_t = Sigma_t^{1/2} Delta_t Sigma_t^{1/2}``.

    ``Delta_t`` are unit-mean matrix-F innovations (Wishart when ``nu2`` is
    inf).  The recursion starts from the unconditional mean (or ``init``) and
    the first ``burnin`` draws are discarded.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    rng = make_rng(rng)
    cbf = _as_cbf(spec)
    n, M = cbf.n, cbf.M
    rho, ok = check_stationarity(cbf)
    if not ok:
        warnings.warn(f"simulating a non-stationary specification (rho = {rho:.4g})", StationarityWarning)
    if init is None:
        start = unconditional_mean(cbf) if ok else cbf.Omega
        init = InitState.constant(start, M)
    total = T + burnin
    delta = sample_innovations(cbf.nu[0], cbf.nu[1], n, rng, total)
    Yh = np.concatenate([init.Y_init[-M:], np.empty((total, n, n))])
    Sh = np.concatenate([init.Sigma_init[-M:], np.empty((total, n, n))])
    arch = [(i, A) for _, i, A in cbf.arch_terms() if np.any(A)]
    garch = [(j, B) for _, j, B in cbf.garch_terms() if np.any(B)]
    for t in range(total):
        s = M + t
        S = cbf.Omega.copy()
        for i, A in arch:
            S += A @ Yh[s - i] @ A.T
        for j, B in garch:
            S += B @ Sh[s - j] @ B.T
        S = 0.5 * (S + S.T)
        root = sqrtm_spd(S)
        Sh[s] = S
        Yh[s] = symmetrize(root @ delta[t] @ root)
    return Yh[M + burnin :]
