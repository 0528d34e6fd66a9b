import numpy as np
import pytest

from cbfvol.diagnostics import model_c2, pi_test, pi_v_test, residuals, vstat
from cbfvol.distributions import make_rng, sample_innovations
from cbfvol.estimation import FitOptions, fit_mle, fit_vt
from cbfvol.matalg import inv_sqrtm_spd
from cbfvol.model import CbfSpec, simulate

from .conftest import OMEGA


@pytest.fixture(scope="module")
def null_fits():
    spec = CbfSpec.diagonal(OMEGA, [[0.4, 0.55, 0.5]], [[0.4, 0.3, 0.5]], (10.0, 8.0))
    Y = simulate(spec, 1000, rng=make_rng(31))
    return Y, fit_mle(Y, structure="diagonal"), fit_vt(Y, structure="diagonal")


def test_residuals_by_hand(rng):
    S = np.array([[[2.0, 0.5], [0.5, 1.0]]])
    Y = np.array([[[1.5, 0.2], [0.2, 0.9]]])
    R = inv_sqrtm_spd(S[0])
    expected = (R @ Y[0] @ R - np.eye(2)).reshape(-1, order="F")
    assert np.allclose(residuals(S, Y)[0], expected)
    assert np.allclose(residuals(Y, Y), 0.0, atol=1e-14)


def test_vstat_by_hand():
    Z = np.arange(12.0).reshape(6, 2)
    l = 2
    v1 = sum(Z[t] @ Z[t - 1] for t in range(2, 6)) / 6
    v2 = sum(Z[t] @ Z[t - 2] for t in range(2, 6)) / 6
    assert np.allclose(vstat(Z, l), [v1, v2])
    with pytest.raises(ValueError):
        vstat(Z, 0)


def test_model_c2_matches_simulation():
    n, nu = 3, (10.0, 12.0)
    D = sample_innovations(nu[0], nu[1], n, make_rng(3), 200_000)
    z = (D - np.eye(n)).reshape(D.shape[0], -1, order="F")
    Sz = z.T @ z / z.shape[0]
    assert model_c2(nu, n) == pytest.approx(np.sum(Sz * Sz), rel=0.03)
    # Wishart limit: Var(vec Delta) = (I + K) / nu1
    assert model_c2((10.0,), 2) == pytest.approx(2 * 6 / 100)


@pytest.mark.parametrize("variance", ["corrected", "robust", "additive"])
def test_null_statistics_are_valid(null_fits, variance):
    Y, mle, vt = null_fits
    for fit in (mle, vt):
        res = pi_test(fit, Y, 3, variance=variance)
        assert res.statistic >= 0 and 0 <= res.p_value <= 1
        assert res.dof == 3 and res.vstat.shape == (3,)


def test_sample_c2_readings_run(null_fits):
    Y, mle, _ = null_fits
    for c2 in ("model", "outer", "scalar"):
        assert np.isfinite(pi_test(mle, Y, 2, c2=c2).statistic)
    with pytest.raises(ValueError):
        pi_test(mle, Y, 2, c2="median")
    with pytest.raises(ValueError):
        pi_test(mle, Y, 2, variance="naive")
    with pytest.raises(ValueError):
        pi_test(mle, Y, 0)


def test_pi_v_requires_vt_fit(null_fits):
    Y, mle, vt = null_fits
    assert pi_v_test(vt, Y, 2).statistic == pi_test(vt, Y, 2).statistic
    with pytest.raises(TypeError):
        pi_v_test(mle, Y, 2)


def test_test_detects_missing_garch_term():
    spec = CbfSpec.diagonal(OMEGA, [[0.3, 0.3, 0.3]], [[0.9, 0.9, 0.9]], (10.0, 8.0))
    Y = simulate(spec, 1000, rng=make_rng(4))
    fit = fit_mle(Y, orders=(1, 0, 1), structure="diagonal", opts=FitOptions(n_restarts=1))
    res = pi_test(fit, Y, 2)
    assert res.reject(0.01)
