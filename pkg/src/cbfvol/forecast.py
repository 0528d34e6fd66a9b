"""Multi-step forecasts, forecast losses, rolling evaluation and Diebold-Mariano tests."""

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .estimation import FitOptions, FitResult, fit_mle, fit_vt
from .exceptions import DegenerateError, FitError
from .factor import extract_factors, project, reconstruct
from .matalg import is_spd, mat_norm, unvech, vech
from .model import HarSpec, InitState, default_init, har_expand, sigma_path
from .validation import check_int, check_series

logger = logging.getLogger(__name__)

LOSS_KINDS = ("frobenius", "spectral")


def _resolve(model, init):
    if isinstance(model, FitResult):
        return model.spec, init if init is not None else model.init
    return model, init


def forecast_path(model, Y, h, init=None):
    """Forecasts of ``E[Y_{T+k} | past]`` for ``k = 1..h``, shape ``(h, n, n)``.

    ``model`` is a :class:`CbfSpec`, :class:`HarSpec` or a fit result.  The
    recursion is run over ``Y`` and then continued with future ``Y`` replaced
    by their forecasts, which is exact for the conditional mean because
    ``Sigma_t`` is linear in past ``Y`` and ``E[Y_t | past] = Sigma_t``.
    """
    h = check_int(h, "h", 1)
    spec, init = _resolve(model, init)
    Y = check_series(Y, require_spd=False)
    cbf = har_expand(spec) if isinstance(spec, HarSpec) else spec
    M = cbf.M
    if init is None:
        init = default_init(M, Y)
    Sigma = sigma_path(spec, Y, init)
    Yh = list(np.concatenate([init.Y_init[-M:], Y])[-M:])
    Sh = list(np.concatenate([init.Sigma_init[-M:], Sigma])[-M:])
    arch = [(i, A) for _, i, A in cbf.arch_terms() if np.any(A)]
    garch = [(j, B) for _, j, B in cbf.garch_terms() if np.any(B)]
    out = []
    for _ in range(h):
        S = cbf.Omega.copy()
        for i, A in arch:
            S = S + A @ Yh[-i] @ A.T
        for j, B in garch:
            S = S + B @ Sh[-j] @ B.T
        S = 0.5 * (S + S.T)
        out.append(S)
        Yh.append(S)
        Sh.append(S)
    return np.array(out)


def forecast_sigma(model, Y, h, init=None):
    """``h``-step-ahead forecast of ``E[Y_{T+h} | past]``; see :func:`forecast_path`."""
    return forecast_path(model, Y, h, init)[-1]


def loss(pred, realized, kind="frobenius"):
    """Norm of ``pred - realized``: Frobenius or spectral."""
    pred = np.asarray(pred, dtype=float)
    realized = np.asarray(realized, dtype=float)
    if pred.shape != realized.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {realized.shape}")
    return mat_norm(pred - realized, kind)


# ---------------------------------------------------------------------------
# baselines


class VarHarBaseline:
    """Componentwise HAR regression of ``vech(Y_t)`` with an intercept.

    Each coordinate of ``y_t = vech(Y_t)`` is regressed on its own lagged
    daily, 5-day and 22-day averages, i.e. a VAR-HAR with diagonal
    coefficient matrices.  Forecasts need not be positive semi-definite.
    """

    def fit(self, Y):
        Y = check_series(Y, require_spd=False)
        T, n = Y.shape[0], Y.shape[1]
        if T <= 22 + 4:
            raise ValueError("VAR-HAR baseline needs T > 26 observations")
        y = np.array([vech(m) for m in Y])
        self.n_ = n
        self.history_ = y
        d = y.shape[1]
        self.coef_ = np.zeros((d, 4))
        for c in range(d):
            X, target = self._design(y[:, c])
            self.coef_[c] = self._ols(X, target, c)
        return self

    @staticmethod
    def _regressors(x, t):
        """Intercept and the three trailing averages ending at index ``t - 1``."""
        return np.array([1.0, x[t - 1], x[t - 5 : t].mean(), x[t - 22 : t].mean()])

    def _design(self, x):
        T = x.size
        X = np.array([self._regressors(x, t) for t in range(22, T)])
        return X, x[22:]

    @staticmethod
    def _ols(X, target, c):
        if np.ptp(X[:, 1:], axis=0).max() == 0.0:
            return np.array([target.mean(), 0.0, 0.0, 0.0])
        beta, _, rank, _ = np.linalg.lstsq(X, target, rcond=None)
        if rank < X.shape[1]:
            raise ValueError(f"rank-deficient HAR regressors for vech coordinate {c}")
        return beta

    def forecast_path(self, h):
        y = [row for row in self.history_[-22:]]
        out = []
        for _ in range(h):
            arr = np.array(y)
            nxt = np.array([self.coef_[c] @ self._regressors(arr[:, c], arr.shape[0])
                            for c in range(self.coef_.shape[0])])
            y.append(nxt)
            out.append(unvech(nxt, self.n_))
        return np.array(out)


def fit_var_har_baseline(Y):
    return VarHarBaseline().fit(Y)


# ---------------------------------------------------------------------------
# rolling evaluation


@dataclass
class ModelEntry:
    """One forecaster in a rolling evaluation.

    ``kind`` is ``"cbf"`` (fitted CBF / CBF-HAR / CAW model), ``"var_har"``
    or ``"mean"`` (window sample mean).  ``factor`` set to an integer fits the
    model to the rank-``factor`` projection and reconstructs the forecast.
    """

    name: str
    kind: str = "cbf"
    family: str = "matrix_f"
    orders: tuple = (1, 1, 1)
    har: bool = False
    structure: str = "diagonal"
    vt: bool = True
    factor: int = None


@dataclass
class RollingConfig:
    window: int
    horizons: tuple = (1, 5, 10)
    refit_every: int = 1
    models: list = field(default_factory=list)
    fit_options: FitOptions = None


@dataclass
class EvalReport:
    """Aligned out-of-sample losses.

    ``losses[name][h][kind]`` is the loss series over the retained forecast
    origins ``origins[h]``; every model shares the same origins.
    """

    horizons: tuple
    model_names: list
    losses: dict
    origins: dict
    n_failed: dict
    non_psd: dict

    def average(self, name, h, kind="frobenius"):
        return float(np.mean(self.losses[name][h][kind]))

    def count(self, h):
        return len(self.origins[h])

    def table(self):
        rows = []
        for name in self.model_names:
            for h in self.horizons:
                rows.append(dict(model=name, h=h, frobenius=self.average(name, h, "frobenius"),
                                 spectral=self.average(name, h, "spectral"), count=self.count(h),
                                 non_psd=self.non_psd[name][h]))
        return rows


class _Forecaster:
    """Holds the most recent fit of one model entry and produces forecasts."""

    def __init__(self, entry, opts):
        self.entry = entry
        self.opts = opts
        self.state = None

    def refit(self, W):
        e = self.entry
        if e.kind == "mean":
            self.state = None
            return
        if e.kind == "var_har":
            self.state = VarHarBaseline().fit(W)
            return
        if e.kind != "cbf":
            raise ValueError(f"unknown model kind {e.kind!r}")
        decomp = None
        data = W
        if e.factor:
            decomp = extract_factors(W, e.factor)
            data = decomp.Yf_series
        fitter = fit_vt if e.vt else fit_mle
        fit = fitter(data, orders=e.orders, structure=e.structure, family=e.family, har=e.har,
                     opts=self.opts)
        self.state = (fit, decomp)

    def predict(self, W, horizons):
        e = self.entry
        H = max(horizons)
        if e.kind == "mean":
            m = W.mean(axis=0)
            return {h: m for h in horizons}
        if e.kind == "var_har":
            base = self.state
            base.history_ = np.array([vech(m) for m in W])
            path = base.forecast_path(H)
            return {h: path[h - 1] for h in horizons}
        fit, decomp = self.state
        data = project(decomp, W) if decomp is not None else W
        init = InitState.constant(data.mean(axis=0), fit.layout.M)
        path = forecast_path(fit.spec, data, H, init)
        if decomp is not None:
            path = reconstruct(decomp, path)
        return {h: path[h - 1] for h in horizons}


def rolling_eval(Y, config):
    """Rolling-window forecast comparison.

    For every origin ``t`` (window ``Y[t - window : t]``) each model forecasts
    ``Y[t + h - 1]`` for every horizon ``h``.  Models are refitted every
    ``refit_every`` origins; in between the last parameters are re-filtered
    over the current window.  An origin at which any model fails is dropped
    for all models so the loss series stay aligned.
    """
    Y = check_series(Y)
    T = Y.shape[0]
    window = check_int(config.window, "window", 2)
    horizons = tuple(sorted(set(int(h) for h in config.horizons)))
    if not horizons or horizons[0] < 1:
        raise ValueError("horizons must be positive integers")
    refit_every = check_int(config.refit_every, "refit_every", 1)
    H = horizons[-1]
    if window + H > T:
        raise ValueError(f"window {window} plus horizon {H} exceeds T = {T}")
    names = [m.name for m in config.models]
    if len(set(names)) != len(names):
        raise ValueError("model names must be unique")
    opts = config.fit_options or FitOptions(compute_cov=False, n_restarts=1)
    forecasters = [_Forecaster(m, opts) for m in config.models]
    kinds = LOSS_KINDS
    rows = {name: {h: {k: [] for k in kinds} for h in horizons} for name in names}
    origins = {h: [] for h in horizons}
    non_psd = {name: {h: 0 for h in horizons} for name in names}
    failed = 0
    for step, t in enumerate(range(window, T - H + 1)):
        W = Y[t - window : t]
        preds = {}
        ok = True
        for fc in forecasters:
            try:
                if step % refit_every == 0 or fc.state is None and fc.entry.kind in ("cbf", "var_har"):
                    with warnings.catch_warnings():
                        warnings.simplefilter("ignore")
                        fc.refit(W)
                preds[fc.entry.name] = fc.predict(W, horizons)
            except (FitError, ValueError, np.linalg.LinAlgError) as exc:
                logger.warning("origin %d: model %s failed (%s)", t, fc.entry.name, exc)
                fc.state = None
                ok = False
                break
        if not ok:
            failed += 1
            continue
        for h in horizons:
            target = Y[t + h - 1]
            origins[h].append(t)
            for name in names:
                P = preds[name][h]
                if not is_spd(P):
                    non_psd[name][h] += 1
                for k in kinds:
                    rows[name][h][k].append(loss(P, target, k))
    losses = {name: {h: {k: np.asarray(v) for k, v in d.items()} for h, d in hs.items()}
              for name, hs in rows.items()}
    return EvalReport(horizons, names, losses, origins, {"windows": failed}, non_psd)


# ---------------------------------------------------------------------------
# Diebold-Mariano


@dataclass
class DmResult:
    statistic: float
    p_value: float
    horizon: int
    loss_kind: str = "frobenius"
    bartlett_fallback: bool = False
    small_sample: bool = False


def dm_test(loss_a, loss_b, h=1, loss_kind="frobenius", small_sample=False):
    """Diebold-Mariano test of equal expected loss.

    The long-run variance of ``d_t = a_t - b_t`` uses a rectangular kernel
    through lag ``h - 1``; if that estimate is not positive the Bartlett
    kernel with the same truncation is used instead (flagged).  With
    ``small_sample`` the Harvey-Leybourne-Newbold correction and Student-t
    reference are applied; otherwise the p-value is two-sided normal.
    """
    a = np.asarray(loss_a, dtype=float)
    b = np.asarray(loss_b, dtype=float)
    h = check_int(h, "h", 1)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("loss series must be 1-D and of equal length")
    N = a.size
    if N < 10:
        raise ValueError("DM test needs at least 10 loss pairs")
    d = a - b
    dbar = d.mean()
    e = d - dbar
    gamma = np.array([e[k:] @ e[: N - k] / N for k in range(min(h, N))])
    if gamma[0] <= 0.0:
        raise DegenerateError("loss differential has zero variance (identical loss series?)")
    V = gamma[0] + 2.0 * gamma[1:].sum()
    fallback = False
    if V <= 0.0:
        weights = 1.0 - np.arange(1, gamma.size) / h
        V = gamma[0] + 2.0 * (weights * gamma[1:]).sum()
        fallback = True
    stat = dbar / np.sqrt(V / N)
    if small_sample:
        stat *= np.sqrt((N + 1 - 2 * h + h * (h - 1) / N) / N)
        p = 2.0 * stats.t.sf(abs(stat), N - 1)
    else:
        p = 2.0 * stats.norm.sf(abs(stat))
    return DmResult(float(stat), float(min(p, 1.0)), h, loss_kind, fallback, small_sample)


def dm_table(report, reference, kind="frobenius", small_sample=False):
    """DM tests of every model against ``reference`` for each horizon.

    Returns a list of dicts; degenerate pairs carry an ``error`` entry.
    """
    rows = []
    for name in report.model_names:
        if name == reference:
            continue
        for h in report.horizons:
            a = report.losses[name][h][kind]
            b = report.losses[reference][h][kind]
            try:
                r = dm_test(a, b, h, kind, small_sample)
                rows.append(dict(model=name, reference=reference, h=h, statistic=r.statistic,
                                 p_value=r.p_value, bartlett_fallback=r.bartlett_fallback))
            except (DegenerateError, ValueError) as exc:
                rows.append(dict(model=name, reference=reference, h=h, error=str(exc)))
    return rows
