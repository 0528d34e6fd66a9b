import numpy as np
import pytest

from cbfvol.distributions import make_rng
from cbfvol.exceptions import DegenerateError
from cbfvol.factor import eigen_ratios, extract_factors, fit_f_cbf, project, reconstruct
from cbfvol.model import CbfSpec, simulate


def noiseless_factor_data(n=30, r=3, T=400, seed=0):
    """``Y_t = F X_t F' + c (I - F F')`` with orthonormal ``F`` and varying SPD ``X_t``."""
    rng = make_rng(seed)
    F, _ = np.linalg.qr(rng.standard_normal((n, r)))
    G = rng.standard_normal((T, r, r)) * np.array([3.0, 2.0, 1.0])[:r]
    X = G @ np.swapaxes(G, 1, 2) + 0.5 * np.eye(r)
    Y = F @ X @ F.T + 0.2 * (np.eye(n) - F @ F.T)
    return F, X, 0.5 * (Y + np.swapaxes(Y, 1, 2))


def test_noiseless_recovery():
    F, X, Y = noiseless_factor_data()
    diag = eigen_ratios(Y)
    assert diag.suggested_r == 3
    d = extract_factors(Y, 3)
    assert np.linalg.norm(d.projector - F @ F.T) < 1e-8
    assert np.allclose(d.F_hat.T @ d.F_hat, np.eye(3), atol=1e-12)
    # reconstruction from the exact factor series is exact
    assert np.allclose(reconstruct(d, d.Yf_series), Y, atol=1e-9)
    assert np.allclose(project(d, Y), d.Yf_series)


def test_eigen_ratio_edge_cases():
    # a spike: lambda_2 = 0 gives an infinite first ratio
    F, _, Y = noiseless_factor_data(n=6, r=1)
    diag = eigen_ratios(Y)
    assert np.isinf(diag.ratios[0]) and diag.suggested_r == 1
    # both eigenvalues zero gives ratio 1
    assert np.all(diag.ratios[1:] == 1.0)
    with pytest.raises(DegenerateError):
        eigen_ratios(np.repeat(np.eye(3)[None], 10, axis=0))


def test_sign_convention_and_ties():
    _, _, Y = noiseless_factor_data(n=8, r=3)
    d = extract_factors(Y, 2)
    idx = np.argmax(np.abs(d.F_hat), axis=0)
    assert np.all(d.F_hat[idx, np.arange(2)] > 0)
    # beyond the factor rank the remaining eigenvalues are tied at zero
    with pytest.raises(DegenerateError):
        extract_factors(Y, 4)
    with pytest.raises(ValueError):
        extract_factors(Y, 9)


def test_reconstruct_psd_clipping():
    _, _, Y = noiseless_factor_data(n=5, r=2)
    d = extract_factors(Y, 2)
    out = reconstruct(d, -np.eye(2), psd=True)
    assert np.linalg.eigvalsh(out)[0] >= -1e-12
    with pytest.raises(ValueError):
        reconstruct(d, np.eye(3))


def test_fit_on_factor_series():
    Om = np.array([[0.5, 0.1], [0.1, 0.4]])
    spec = CbfSpec.diagonal(Om, [[0.4, 0.5]], [[0.5, 0.4]], (12.0, 10.0))
    Yf = simulate(spec, 600, rng=make_rng(2))
    rng = make_rng(3)
    F, _ = np.linalg.qr(rng.standard_normal((6, 2)))
    Y = F @ Yf @ F.T + 0.1 * (np.eye(6) - F @ F.T)
    d = extract_factors(Y, 2)
    fit = fit_f_cbf(d)
    assert fit.converged
    assert fit.layout.n == 2
