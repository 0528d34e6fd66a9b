import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from cbfvol.estimators import CBF, FactorCBF, FactorExtractor
from cbfvol.forecast import forecast_sigma
from cbfvol.model import unconditional_mean


def test_params_roundtrip_and_clone():
    est = CBF(vt=True, n_restarts=2)
    params = est.get_params()
    assert params["vt"] is True and params["n_restarts"] == 2
    c = clone(est)
    assert c.get_params() == params
    c.set_params(family="wishart")
    assert c.family == "wishart"


def test_cbf_fit_predict_score(sim_series):
    est = CBF().fit(sim_series)
    assert est.n_features_in_ == 3
    f1 = est.predict()
    assert np.allclose(f1, forecast_sigma(est.spec_, sim_series, 1, est.fit_result_.init))
    far = est.predict(h=400)
    assert np.allclose(far, unconditional_mean(est.spec_), atol=1e-6)
    assert np.isfinite(est.score(sim_series))
    assert est.sigma_path().shape == sim_series.shape
    res = est.diagnose(lags=(2,))
    assert res[0].lags == 2


def test_not_fitted():
    with pytest.raises(NotFittedError):
        CBF().predict()


def test_factor_extractor_and_factor_cbf(sim_series):
    rng = np.random.default_rng(0)
    F, _ = np.linalg.qr(rng.standard_normal((6, 3)))
    Y = F @ sim_series @ F.T + 0.05 * (np.eye(6) - F @ F.T)
    fx = FactorExtractor(n_factors=3).fit(Y)
    Yf = fx.transform(Y)
    assert Yf.shape == (Y.shape[0], 3, 3)
    assert np.allclose(fx.inverse_transform(Yf), Y, atol=1e-10)
    model = FactorCBF(n_factors=3, compute_cov=False).fit(Y)
    pred = model.predict()
    assert pred.shape == (6, 6)
    assert np.linalg.eigvalsh(pred)[0] > 0
