import numpy as np
import pytest
from scipy.optimize import minimize

from cbfvol.distributions import make_rng
from cbfvol.estimation import FitOptions, _robust_inverse, fit_mle, fit_vt, implied_omega_se, start_theta, vt_psi
from cbfvol.exceptions import SingularCovarianceWarning
from cbfvol.likelihood import Objective, ParamLayout, make_init
from cbfvol.matalg import vec
from cbfvol.model import CbfSpec, HarSpec, simulate

from .conftest import OMEGA


@pytest.fixture(scope="module")
def long_series():
    spec = CbfSpec.diagonal(OMEGA, [[0.4, 0.55, 0.5]], [[0.4, 0.3, 0.5]], (10.0, 8.0))
    return spec, simulate(spec, 1500, rng=make_rng(77))


def test_mle_recovers_parameters(long_series):
    spec, Y = long_series
    fit = fit_mle(Y, structure="diagonal")
    assert fit.converged
    truth = fit.layout.pack(spec)
    z = (fit.theta_hat - truth) / fit.std_errors
    assert np.all(np.abs(z) < 4.5)
    assert np.allclose(fit.cov, fit.cov.T)
    names = [row[0] for row in fit.summary()]
    assert names[-2:] == ["nu1", "nu2"]


def test_vt_targets_sample_mean(long_series):
    spec, Y = long_series
    fit = fit_vt(Y, structure="diagonal")
    assert fit.converged
    assert np.allclose(fit.s_hat, vec(Y.mean(axis=0)))
    # implied Omega is S - A S A' - B S B'
    A, B = spec.A[0, 0], spec.B[0, 0]
    a, b = fit.spec.A[0, 0], fit.spec.B[0, 0]
    S = Y.mean(axis=0)
    assert np.allclose(fit.omega_hat, S - a @ S @ a.T - b @ S @ b.T)
    assert np.all(np.abs(np.diag(a) - np.diag(A)) < 0.1)
    assert np.all(np.abs(np.diag(b) - np.diag(B)) < 0.25)
    se = implied_omega_se(fit, Y)
    assert se.shape == (6,) and np.all(se > 0)
    Psi = vt_psi(fit.layout, fit.theta_hat)
    assert Psi.shape == (9, 9)


def test_mle_matches_derivative_free_optimizer():
    spec = CbfSpec.diagonal(np.array([[0.3]]), [[0.45]], [[0.6]], (7.0, 9.0))
    Y = simulate(spec, 1200, rng=make_rng(5))
    fit = fit_mle(Y, structure="diagonal", opts=FitOptions(compute_cov=False))
    obj = Objective(fit.layout, Y, make_init(Y, fit.layout))
    ref = minimize(obj, fit.layout.pack(spec), method="Nelder-Mead",
                   options=dict(xatol=1e-10, fatol=1e-13, maxiter=20_000, maxfev=20_000))
    assert fit.neg_loglik <= ref.fun + 1e-9
    assert np.allclose(fit.theta_hat, ref.x, atol=2e-3)


def test_wishart_family_and_har_fit():
    har = HarSpec(OMEGA, np.diag([0.5, 0.45, 0.4]), np.diag([0.4, 0.4, 0.35]), np.diag([0.3, 0.3, 0.3]),
                  (12.0, np.inf), "diagonal")
    Y = simulate(har, 900, rng=make_rng(8))
    fit = fit_mle(Y, har=True, structure="diagonal", family="wishart")
    assert fit.converged and fit.family == "wishart"
    assert isinstance(fit.spec, HarSpec)
    assert abs(fit.theta_hat[-1] - 12.0) < 5 * fit.std_errors[-1]


def test_full_structure_fit_runs(long_series):
    _, Y = long_series
    fit = fit_mle(Y[:600], structure="full", opts=FitOptions(compute_cov=False, n_restarts=1))
    assert fit.layout.size == 6 + 18 + 2
    assert np.isfinite(fit.neg_loglik)


def test_start_values_are_feasible(long_series):
    _, Y = long_series
    for kw in (dict(), dict(vt=True), dict(har=True), dict(P=2, Q=2, K=2)):
        layout = ParamLayout(3, **{"structure": "diagonal", **kw})
        theta = start_theta(layout, Y)
        obj = Objective(layout, Y, make_init(Y, layout))
        assert obj.value_and_grad(theta)[1] is not None


def test_series_too_short_is_rejected(long_series):
    _, Y = long_series
    with pytest.raises(ValueError, match="too short"):
        fit_mle(Y[:40], structure="diagonal")


def test_singular_hessian_falls_back_to_pseudo_inverse():
    with pytest.warns(SingularCovarianceWarning):
        inv, singular = _robust_inverse(np.array([[1.0, 0.0], [0.0, 0.0]]))
    assert singular and np.allclose(inv, [[1.0, 0.0], [0.0, 0.0]])
    with pytest.warns(SingularCovarianceWarning):
        _, singular = _robust_inverse(np.array([[1.0, 0.0], [0.0, -1.0]]))
    assert singular
    inv, singular = _robust_inverse(np.diag([2.0, 4.0]))
    assert not singular and np.allclose(inv, np.diag([0.5, 0.25]))
