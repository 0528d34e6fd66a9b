"""Monte Carlo replication harness for the simulation studies.

``estimators`` measures bias, empirical SD (ESD) and mean asymptotic SD (ASD) of
the full MLE and the two-step VT estimator for the diagonal CBF(1,1) design;
``portmanteau`` measures rejection rates of the portmanteau tests when the fitted
CBF(1,1) omits a second ARCH lag of size ``lam``.  Replication ``r`` uses the
random stream ``make_rng(seed, task=r)`` so results do not depend on the
number of workers.
"""

import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import chi2

from .diagnostics import pi_test
from .distributions import make_rng
from .estimation import FitOptions, fit_mle, fit_vt
from .matalg import vech
from .model import CbfSpec, simulate

logger = logging.getLogger(__name__)

OMEGA0 = np.array([[0.5, 0.2, 0.3], [0.2, 0.5, 0.25], [0.3, 0.25, 0.5]])
A0 = np.array([0.4, 0.55, 0.5])
B0 = np.array([0.4, 0.3, 0.5])
CASES = {1: (10.0, 8.0), 2: (15.0, 10.0), 3: (20.0, 10.0)}

PARAM_LABELS = ["nu1", "nu2", "A11", "A22", "A33", "B11", "B22", "B33",
                "Omega11", "Omega21", "Omega31", "Omega22", "Omega32", "Omega33"]

# Reference bias / ESD / ASD for case 1, T = 1000, in PARAM_LABELS order.
REFERENCE_ESTIMATORS = {
    "mle": {
        "bias": [0.0320, 0.0160, -0.0014, -0.0029, -0.0009, -0.0151, -0.0112, -0.0102,
                 -0.0005, 0.0028, 0.0057, -0.0009, 0.0037, 0.0053],
        "esd": [0.3914, 0.2452, 0.0255, 0.0249, 0.0240, 0.1170, 0.0964, 0.0728,
                0.0600, 0.0188, 0.0337, 0.0419, 0.0248, 0.0601],
        "asd": [0.4111, 0.2563, 0.0258, 0.0259, 0.0241, 0.1103, 0.0892, 0.0652,
                0.0586, 0.0179, 0.0323, 0.0402, 0.0232, 0.0562],
    },
    "vt": {
        "bias": [-0.0080, 0.0382, -0.0005, -0.0030, 0.0000, -0.0130, -0.0088, -0.0096,
                 -0.0020, 0.0020, 0.0047, -0.0030, 0.0033, 0.0040],
        "esd": [0.3884, 0.2607, 0.0263, 0.0272, 0.0255, 0.1165, 0.0956, 0.0728,
                0.0614, 0.0229, 0.0366, 0.0433, 0.0291, 0.0615],
        "asd": [0.4024, 0.2619, 0.0266, 0.0282, 0.0258, 0.1207, 0.1046, 0.0742]
               + [None] * 6,
    },
}

# Reference rejection rates at T = 1000 for l = 2..6: {lam: (Pi, Pi_v)}.
REFERENCE_PORTMANTEAU = {
    0.0: ([0.043, 0.048, 0.052, 0.047, 0.049], [0.037, 0.045, 0.054, 0.048, 0.054]),
    0.05: ([0.048, 0.051, 0.058, 0.060, 0.061], [0.045, 0.048, 0.053, 0.052, 0.062]),
    0.1: ([0.238, 0.210, 0.196, 0.196, 0.179], [0.238, 0.211, 0.199, 0.199, 0.183]),
    0.15: ([0.885, 0.847, 0.818, 0.784, 0.768], [0.854, 0.818, 0.793, 0.762, 0.746]),
    0.2: ([0.976, 0.972, 0.964, 0.961, 0.956], [0.924, 0.916, 0.893, 0.889, 0.887]),
}


def design_spec(nu=(10.0, 8.0), lam=0.0):
    """Diagonal CBF design; ``lam > 0`` adds a second ARCH lag ``lam * I``."""
    a = [A0, np.full(3, lam)] if lam else [A0]
    return CbfSpec.diagonal(OMEGA0, a, [B0], nu)


def _true_vector(nu):
    return np.concatenate([nu, A0, B0, vech(OMEGA0)])


def _estimate_vector(fit):
    lay = fit.layout
    _, arch, garch, nu = lay.split(fit.theta_hat)
    omega = fit.omega_hat if lay.vt else fit.spec.Omega
    return np.concatenate([nu, arch[0], garch[0], vech(omega)])


def _se_vector(fit):
    lay = fit.layout
    se = fit.std_errors
    nu_se = se[lay.nu_slice]
    body = se[lay.coef_slice]
    om = np.full(6, np.nan) if lay.vt else se[lay.intercept_slice]
    return np.concatenate([nu_se, body, om])


def _estimator_rep(args):
    rep, seed, nu, T, opts = args
    Y = simulate(design_spec(nu), T, rng=make_rng(seed, task=rep))
    out = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for name, fitter in (("mle", fit_mle), ("vt", fit_vt)):
            fit = fitter(Y, structure="diagonal", opts=opts)
            out[name] = (_estimate_vector(fit), _se_vector(fit), fit.converged)
    return rep, out


def _portmanteau_rep(args):
    rep, seed, lam, T, lags, variance, opts = args
    Y = simulate(design_spec(CASES[1], lam), T, rng=make_rng(seed, task=rep))
    out = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for name, fitter in (("mle", fit_mle), ("vt", fit_vt)):
            fit = fitter(Y, structure="diagonal", opts=opts)
            stats = [pi_test(fit, Y, l, variance=variance).statistic for l in lags]
            out[name] = (np.array(stats), fit.converged)
    return rep, out


def _run(worker, tasks, workers):
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(worker, tasks, chunksize=4))
    else:
        results = [worker(t) for t in tasks]
    return [r for _, r in sorted(results, key=lambda x: x[0])]


@dataclass
class EstimatorStudyResult:
    case: int
    T: int
    reps: int
    truth: np.ndarray
    estimates: dict
    std_errors: dict
    converged: dict
    labels: list = field(default_factory=lambda: list(PARAM_LABELS))

    def bias(self, name):
        return self.estimates[name].mean(axis=0) - self.truth

    def esd(self, name):
        return self.estimates[name].std(axis=0, ddof=1)

    def asd(self, name):
        # columns without any finite standard error (VT intercepts) stay NaN
        se = self.std_errors[name]
        ok = np.isfinite(se)
        count = ok.sum(axis=0)
        total = np.where(ok, se, 0.0).sum(axis=0)
        return np.where(count > 0, total / np.maximum(count, 1), np.nan)

    def to_dict(self):
        out = dict(study="estimators", case=self.case, T=self.T, reps=self.reps, labels=self.labels)
        for name in ("mle", "vt"):
            asd = self.asd(name)
            if name == "vt":
                asd[8:] = np.nan
            out[name] = dict(bias=self.bias(name), esd=self.esd(name), asd=asd,
                             converged=int(np.sum(self.converged[name])))
            if self.case == 1 and self.T == 1000:
                out[name]["reference"] = REFERENCE_ESTIMATORS[name]
        return out


def run_estimator_study(case=1, T=1000, reps=200, seed=20240601, workers=1, opts=None):
    """Replicate the estimator study for ``case`` in {1, 2, 3}."""
    nu = CASES[case]
    opts = opts or FitOptions()
    tasks = [(r, seed, nu, T, opts) for r in range(reps)]
    results = _run(_estimator_rep, tasks, workers)
    est = {k: np.array([r[k][0] for r in results]) for k in ("mle", "vt")}
    se = {k: np.array([r[k][1] for r in results]) for k in ("mle", "vt")}
    conv = {k: np.array([r[k][2] for r in results]) for k in ("mle", "vt")}
    return EstimatorStudyResult(case, T, reps, _true_vector(nu), est, se, conv)


@dataclass
class PortmanteauStudyResult:
    lam: float
    T: int
    reps: int
    lags: tuple
    statistics: dict
    converged: dict
    alpha: float = 0.05

    def rejection_rates(self, name):
        crit = np.array([chi2.ppf(1 - self.alpha, l) for l in self.lags])
        return np.mean(self.statistics[name] > crit, axis=0)

    def to_dict(self):
        out = dict(study="portmanteau", lam=self.lam, T=self.T, reps=self.reps, lags=list(self.lags),
                   alpha=self.alpha)
        for name in ("mle", "vt"):
            out[name] = dict(rejection=self.rejection_rates(name),
                             converged=int(np.sum(self.converged[name])))
        ref = REFERENCE_PORTMANTEAU.get(float(self.lam))
        if ref is not None and self.T == 1000:
            out["reference"] = {"mle": ref[0], "vt": ref[1], "lags": [2, 3, 4, 5, 6]}
        return out


def run_portmanteau_study(lam=0.0, T=1000, reps=500, lags=(2, 3, 4, 5, 6), seed=20240602, workers=1,
               variance="corrected", opts=None):
    """Replicate the size/power study of the portmanteau tests for one ``lam``."""
    opts = opts or FitOptions()
    lags = tuple(int(l) for l in lags)
    # distinct lam values get distinct streams
    base = seed + int(round(lam * 1000)) * 7919
    tasks = [(r, base, lam, T, lags, variance, opts) for r in range(reps)]
    results = _run(_portmanteau_rep, tasks, workers)
    stats = {k: np.array([r[k][0] for r in results]) for k in ("mle", "vt")}
    conv = {k: np.array([r[k][1] for r in results]) for k in ("mle", "vt")}
    return PortmanteauStudyResult(lam, T, reps, lags, stats, conv)
