"""Command-line interface: ``cbfvol <command> [options]``.

Commands are ``simulate``, ``fit``, ``diagnose``, ``forecast``, ``factor`` and
``replicate``.  Settings come from an INI file (``--config``) whose sections
are listed in :data:`CONFIG_SCHEMA`; unknown sections or keys are rejected.
Command-line flags override file values.

Exit codes: 0 success, 2 invalid input or configuration, 3 file I/O error,
4 numerical failure.
"""

import argparse
import configparser
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .diagnostics import pi_test
from .distributions import make_rng
from .estimation import FitOptions, FitResult, VtFitResult, asymp_cov_mle, asymp_cov_vt, fit_mle, fit_vt
from .exceptions import DegenerateError, FitError, NotStationaryError
from .factor import eigen_ratios, extract_factors
from .forecast import ModelEntry, RollingConfig, dm_table, rolling_eval
from .io import read_json, read_rcov, write_json, write_ratio_csv, write_rcov
from .likelihood import Objective, ParamLayout, make_init
from .model import CbfSpec, HarSpec, check_stationarity, persistence, simulate
from .replicate import CASES, OMEGA0, design_spec, run_estimator_study, run_portmanteau_study

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4

CONFIG_SCHEMA = {
    "model": {"family", "orders", "har", "structure", "vt"},
    "optimizer": {"grad_tol", "max_iter", "n_restarts", "jitter"},
    "simulate": {"design", "T", "burnin", "lam", "spec_file"},
    "data": {"ridge"},
    "diagnose": {"lags", "variance"},
    "rolling": {"window", "horizons", "refit_every", "reference", "small_sample"},
    "factor": {"r"},
    "replicate": {"study", "case", "T", "reps", "lams", "lags", "variance"},
}
MODEL_SECTION_KEYS = {"kind", "family", "orders", "har", "structure", "vt", "factor"}

HAR_DESIGN = dict(A_d=np.diag([0.7, 0.65, 0.75]), A_w=np.diag([0.6, 0.6, 0.55]),
                  A_m=np.diag([0.4, 0.45, 0.4]), nu=(20.0, 10.0))


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration


def load_config(path):
    cp = configparser.ConfigParser()
    if path:
        if not os.path.exists(path):
            raise FileNotFoundError(f"config file not found: {path}")
        cp.read(path)
    for section in cp.sections():
        if section.startswith("model."):
            allowed = MODEL_SECTION_KEYS
        elif section in CONFIG_SCHEMA:
            allowed = CONFIG_SCHEMA[section]
        else:
            raise ConfigError(f"unknown config section [{section}]")
        unknown = set(cp[section]) - {k.lower() for k in allowed}
        if unknown:
            raise ConfigError(f"unknown keys in [{section}]: {', '.join(sorted(unknown))}")
    return cp


def _get(cp, section, key, default=None, kind=str):
    key = key.lower()
    if not cp.has_section(section) or key not in cp[section]:
        return default
    raw = cp[section][key].strip()
    try:
        if kind is bool:
            return cp.getboolean(section, key)
        if kind == "ints":
            return tuple(int(v) for v in raw.replace(",", " ").split())
        if kind == "floats":
            return tuple(float(v) for v in raw.replace(",", " ").split())
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from exc


def _fit_options(cp, seed):
    return FitOptions(grad_tol=_get(cp, "optimizer", "grad_tol", 1e-6, float),
                      max_iter=_get(cp, "optimizer", "max_iter", 2000, int),
                      n_restarts=_get(cp, "optimizer", "n_restarts", 5, int),
                      jitter=_get(cp, "optimizer", "jitter", 0.1, float),
                      seed=seed)


def _model_settings(cp):
    orders = _get(cp, "model", "orders", (1, 1, 1), "ints")
    if len(orders) != 3:
        raise ConfigError("[model] orders must be 'P, Q, K'")
    return dict(family=_get(cp, "model", "family", "matrix_f"), orders=orders,
                har=_get(cp, "model", "har", False, bool),
                structure=_get(cp, "model", "structure", "diagonal"),
                vt=_get(cp, "model", "vt", False, bool))


# ---------------------------------------------------------------------------
# commands


def _spec_from_json(path):
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    nu = tuple(float(v) for v in d["nu"])
    structure = d.get("structure", "full")
    if "A_d" in d:
        return HarSpec(np.array(d["Omega"]), np.array(d["A_d"]), np.array(d["A_w"]), np.array(d["A_m"]),
                       nu, structure)
    return CbfSpec(np.array(d["Omega"]), np.array(d["A"]), np.array(d["B"]), nu, structure)


def _spec_to_dict(spec):
    if isinstance(spec, HarSpec):
        return dict(kind="har", Omega=spec.Omega, A_d=spec.A_d, A_w=spec.A_w, A_m=spec.A_m,
                    nu=list(spec.nu), structure=spec.structure)
    return dict(kind="cbf", Omega=spec.Omega, A=spec.A, B=spec.B, nu=list(spec.nu),
                structure=spec.structure)


def cmd_simulate(args, cp):
    T = _get(cp, "simulate", "T", 1000, int) if args.T is None else args.T
    if T < 1:
        raise ConfigError("T must be >= 1")
    burnin = _get(cp, "simulate", "burnin", 500, int)
    spec_file = _get(cp, "simulate", "spec_file")
    design = _get(cp, "simulate", "design", "case1")
    if spec_file:
        spec = _spec_from_json(spec_file)
    elif design.startswith("case"):
        spec = design_spec(CASES[int(design[4:])], _get(cp, "simulate", "lam", 0.0, float))
    elif design == "har":
        spec = HarSpec(OMEGA0, HAR_DESIGN["A_d"], HAR_DESIGN["A_w"], HAR_DESIGN["A_m"], HAR_DESIGN["nu"],
                       "diagonal")
    else:
        raise ConfigError(f"unknown design {design!r}")
    Y = simulate(spec, T, burnin=burnin, rng=make_rng(args.seed))
    out = args.out or "simulated.rcov"
    write_rcov(out, Y)
    write_json(out + ".manifest.json", dict(command="simulate", seed=args.seed, T=T, burnin=burnin,
                                            spec=_spec_to_dict(spec), output=out))
    return EXIT_OK


def _read_input(args, cp):
    ridge = args.ridge if args.ridge is not None else _get(cp, "data", "ridge", 0.0, float)
    if ridge < 0:
        raise ConfigError("ridge must be non-negative")
    return read_rcov(args.input, ridge=ridge)


def _fit_report(fit, Y):
    lay = fit.layout
    spec = fit.spec
    rho, stationary = check_stationarity(spec)
    report = dict(
        command="fit", family=lay.family, vt=lay.vt, har=lay.har, structure=lay.structure,
        orders=[lay.P, lay.Q, lay.K], n=lay.n, T=int(Y.shape[0]),
        parameters=[dict(name=nm, estimate=est, std_error=se) for nm, est, se in fit.summary()],
        theta=fit.theta_hat, neg_loglik_mean=fit.neg_loglik, loglik=-fit.neg_loglik * Y.shape[0],
        converged=fit.converged, iterations=fit.iterations, grad_norm=fit.grad_norm,
        cov_singular=fit.cov_singular, rho=rho, stationary=bool(stationary), spec=_spec_to_dict(spec),
    )
    if lay.structure == "diagonal":
        report["persistence"] = [persistence(spec, s) for s in range(lay.n)]
    if lay.vt:
        report["s_hat"] = fit.s_hat
        report["omega_hat"] = fit.omega_hat
    return report


def cmd_fit(args, cp):
    Y = _read_input(args, cp)
    m = _model_settings(cp)
    fitter = fit_vt if m["vt"] else fit_mle
    fit = fitter(Y, orders=m["orders"], structure=m["structure"], family=m["family"], har=m["har"],
                 opts=_fit_options(cp, args.seed))
    write_json(args.out, _fit_report(fit, Y))
    return EXIT_OK


def _fit_from_report(doc, Y):
    P, Q, K = doc["orders"]
    layout = ParamLayout(doc["n"], P, Q, K, doc["structure"], doc["family"], har=doc["har"], vt=doc["vt"])
    if Y.shape[1] != layout.n:
        raise ConfigError(f"fit report is for n={layout.n} but the data have n={Y.shape[1]}")
    theta = np.asarray(doc["theta"], dtype=float)
    init = make_init(Y, layout)
    cls = VtFitResult if layout.vt else FitResult
    fit = cls(layout.unpack(theta), theta, layout, doc["neg_loglik_mean"], doc["converged"],
              doc["iterations"], doc["grad_norm"], Y.shape[0], init)
    obj = Objective(layout, Y, init)
    if layout.vt:
        fit.omega_hat = layout.implied_omega(theta)
        asymp_cov_vt(fit, Y, obj=obj)
    else:
        asymp_cov_mle(fit, Y, obj=obj)
    return fit, obj


def cmd_diagnose(args, cp):
    Y = _read_input(args, cp)
    doc = read_json(args.fit)
    lags = args.lags or _get(cp, "diagnose", "lags", (2, 3, 4, 5, 6), "ints")
    if any(l < 1 for l in lags):
        raise ConfigError("lags must be >= 1")
    variance = _get(cp, "diagnose", "variance", "corrected")
    fit, obj = _fit_from_report(doc, Y)
    rows = []
    for l in lags:
        res = pi_test(fit, Y, l, variance=variance, obj=obj)
        rows.append(dict(l=l, statistic=res.statistic, p=res.p_value, dof=res.dof, pinv=res.pinv_used))
    write_json(args.out, dict(command="diagnose", test="Pi_v" if doc["vt"] else "Pi", variance=variance,
                              columns=["l", "statistic", "p"], rows=rows))
    return EXIT_OK


def _model_entries(cp):
    entries = []
    for section in cp.sections():
        if not section.startswith("model."):
            continue
        name = section[len("model."):]
        factor = _get(cp, section, "factor", None)
        entries.append(ModelEntry(
            name=name, kind=_get(cp, section, "kind", "cbf"), family=_get(cp, section, "family", "matrix_f"),
            orders=_get(cp, section, "orders", (1, 1, 1), "ints"), har=_get(cp, section, "har", False, bool),
            structure=_get(cp, section, "structure", "diagonal"), vt=_get(cp, section, "vt", True, bool),
            factor=int(factor) if factor not in (None, "", "none") else None))
    if not entries:
        entries = [ModelEntry("VT-CBF-HAR", har=True), ModelEntry("VT-CAW-HAR", family="wishart", har=True),
                   ModelEntry("VAR-HAR", kind="var_har"), ModelEntry("mean", kind="mean")]
    return entries


def cmd_forecast(args, cp):
    Y = _read_input(args, cp)
    entries = _model_entries(cp)
    config = RollingConfig(window=_get(cp, "rolling", "window", 800, int),
                           horizons=_get(cp, "rolling", "horizons", (1, 5, 10), "ints"),
                           refit_every=_get(cp, "rolling", "refit_every", 1, int), models=entries,
                           fit_options=FitOptions(compute_cov=False, n_restarts=1, seed=args.seed))
    report = rolling_eval(Y, config)
    reference = _get(cp, "rolling", "reference", entries[0].name)
    if reference not in report.model_names:
        raise ConfigError(f"reference model {reference!r} is not in the model menu")
    small = _get(cp, "rolling", "small_sample", False, bool)
    dm = {kind: dm_table(report, reference, kind, small) for kind in ("frobenius", "spectral")}
    write_json(args.out, dict(command="forecast", window=config.window, horizons=list(report.horizons),
                              refit_every=config.refit_every, failed_windows=report.n_failed["windows"],
                              summary=report.table(), dm=dm, reference=reference))
    return EXIT_OK


def cmd_factor(args, cp):
    Y = _read_input(args, cp)
    diag = eigen_ratios(Y)
    r_cfg = args.r or _get(cp, "factor", "r", "auto")
    r = diag.suggested_r if str(r_cfg) == "auto" else int(r_cfg)
    decomp = extract_factors(Y, r)
    out = args.out or "factor_out"
    os.makedirs(out, exist_ok=True)
    write_ratio_csv(os.path.join(out, "ratios.csv"), diag.eigenvalues, diag.ratios)
    write_rcov(os.path.join(out, "factors.rcov"), decomp.Yf_series)
    write_json(os.path.join(out, "decomposition.json"),
               dict(command="factor", r=r, suggested_r=diag.suggested_r, eigenvalues=diag.eigenvalues,
                    ratios=diag.ratios, F_hat=decomp.F_hat, Y0_hat=decomp.Y0_hat))
    return EXIT_OK


def _fmt_row(label, values):
    cells = " ".join(f"{v:9.4f}" if v is not None and np.isfinite(v) else f"{'':9s}" for v in values)
    return f"{label:<10s} {cells}"


def cmd_replicate(args, cp):
    study = args.study or _get(cp, "replicate", "study", "estimators")
    T = _get(cp, "replicate", "T", 1000, int)
    reps = args.reps or _get(cp, "replicate", "reps", 200 if study == "estimators" else 500, int)
    opts = _fit_options(cp, args.seed)
    workers = args.threads
    if study == "estimators":
        res = run_estimator_study(_get(cp, "replicate", "case", 1, int), T, reps, seed=args.seed, workers=workers,
                         opts=opts)
        doc = res.to_dict()
        print("param      " + " ".join(f"{lab:>9s}" for lab in res.labels))
        for name in ("mle", "vt"):
            for stat in ("bias", "esd", "asd"):
                print(_fmt_row(f"{name}.{stat}", doc[name][stat]))
    elif study == "portmanteau":
        lams = _get(cp, "replicate", "lams", (0.0, 0.05, 0.1, 0.15, 0.2), "floats")
        lags = _get(cp, "replicate", "lags", (2, 3, 4, 5, 6), "ints")
        variance = _get(cp, "replicate", "variance", "corrected")
        doc = dict(study="portmanteau", T=T, reps=reps, lags=list(lags), results=[])
        for lam in lams:
            res = run_portmanteau_study(lam, T, reps, lags, seed=args.seed, workers=workers, variance=variance,
                             opts=opts)
            d = res.to_dict()
            doc["results"].append(d)
            print(_fmt_row(f"lam={lam:g}", list(d["mle"]["rejection"]) + list(d["vt"]["rejection"])))
    else:
        raise ConfigError(f"unknown study {study!r}")
    if args.out:
        write_json(args.out, doc)
    return EXIT_OK


COMMANDS = dict(simulate=cmd_simulate, fit=cmd_fit, diagnose=cmd_diagnose, forecast=cmd_forecast,
                factor=cmd_factor, replicate=cmd_replicate)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI configuration file")
    common.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    common.add_argument("--threads", type=int, default=1, help="worker processes for replications")
    common.add_argument("--out", help="output path ('-' or omitted prints JSON to stdout)")
    common.add_argument("--ridge", type=float, help="add ridge * I to every input matrix before validation")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="cbfvol", description="Conditional BEKK matrix-F volatility models")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="simulate a realized covariance series")
    p.add_argument("--T", type=int, help="number of observations (overrides config)")
    p = sub.add_parser("fit", parents=[common], help="fit a model to an RcovFile")
    p.add_argument("input")
    p = sub.add_parser("diagnose", parents=[common], help="portmanteau tests for a fitted model")
    p.add_argument("input")
    p.add_argument("fit", help="JSON report written by 'fit'")
    p.add_argument("--lags", type=int, nargs="+")
    p = sub.add_parser("forecast", parents=[common], help="rolling-window forecast comparison")
    p.add_argument("input")
    p = sub.add_parser("factor", parents=[common], help="eigen-ratio table and factor extraction")
    p.add_argument("input")
    p.add_argument("--r", help="number of factors or 'auto'")
    p = sub.add_parser("replicate", parents=[common], help="Monte Carlo replication studies")
    p.add_argument("study", nargs="?", choices=["estimators", "portmanteau"])
    p.add_argument("--reps", type=int)
    return parser


def _fail(code, kind, exc):
    print(json.dumps({"error": str(exc), "kind": kind}), file=sys.stderr)
    return code


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cp = load_config(args.config)
        return COMMANDS[args.command](args, cp)
    except (OSError, UnicodeDecodeError) as exc:
        return _fail(EXIT_IO, "io", exc)
    except (FitError, NotStationaryError, DegenerateError, np.linalg.LinAlgError) as exc:
        return _fail(EXIT_NUMERIC, "numerical", exc)
    except (ConfigError, ValueError, KeyError, TypeError, configparser.Error) as exc:
        return _fail(EXIT_VALIDATION, "validation", exc)


if __name__ == "__main__":
    sys.exit(main())
