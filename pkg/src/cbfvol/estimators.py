"""scikit-learn style estimators wrapping the functional API."""

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .diagnostics import pi_test
from .estimation import FitOptions, fit_mle, fit_vt
from .factor import eigen_ratios, extract_factors, project, reconstruct
from .forecast import forecast_path
from .likelihood import Objective
from .model import InitState
from .validation import check_series


class CBF(BaseEstimator):
    """Conditional BEKK matrix-F model for a series of realized covariance matrices.

    Parameters
    ----------
    orders : tuple, default (1, 1, 1)
        ``(P, Q, K)``; ignored when ``har=True``.
    har : bool, default False
        Use the daily/weekly/monthly HAR dynamics instead of BEKK lags.
    structure : {"diagonal", "full"}
    family : {"matrix_f", "wishart"}
        ``"wishart"`` gives the CAW likelihood.
    vt : bool, default False
        Two-step variance-targeting estimation.
    grad_tol, max_iter, n_restarts : optimizer settings.
    compute_cov : bool, default True
        Compute standard errors after fitting.
    random_state : int, default 0
        Seed of the restart jitter.

    Attributes
    ----------
    spec_ : CbfSpec or HarSpec
    fit_result_ : FitResult or VtFitResult
    n_features_in_ : int
        Matrix dimension ``n``.
    """

    def __init__(self, orders=(1, 1, 1), har=False, structure="diagonal", family="matrix_f", vt=False,
                 grad_tol=1e-6, max_iter=2000, n_restarts=5, compute_cov=True, random_state=0):
        self.orders = orders
        self.har = har
        self.structure = structure
        self.family = family
        self.vt = vt
        self.grad_tol = grad_tol
        self.max_iter = max_iter
        self.n_restarts = n_restarts
        self.compute_cov = compute_cov
        self.random_state = random_state

    def _options(self):
        return FitOptions(grad_tol=self.grad_tol, max_iter=self.max_iter, n_restarts=self.n_restarts,
                          compute_cov=self.compute_cov, seed=self.random_state)

    def fit(self, Y, y=None):
        Y = check_series(Y)
        fitter = fit_vt if self.vt else fit_mle
        res = fitter(Y, orders=tuple(self.orders), structure=self.structure, family=self.family,
                     har=self.har, opts=self._options())
        self.fit_result_ = res
        self.spec_ = res.spec
        self.theta_ = res.theta_hat
        self.std_errors_ = res.std_errors
        self.n_features_in_ = Y.shape[1]
        self._train = Y
        return self

    def _init_for(self, Y):
        return InitState.constant(Y.mean(axis=0), self.fit_result_.layout.M)

    def predict(self, Y=None, h=1):
        """``h``-step forecast of the conditional mean after the end of ``Y``
        (the training series by default)."""
        check_is_fitted(self, "spec_")
        Y = self._train if Y is None else check_series(Y)
        init = self.fit_result_.init if Y is self._train else self._init_for(Y)
        return forecast_path(self.spec_, Y, h, init)[-1]

    def sigma_path(self, Y=None):
        """In-sample conditional means ``Sigma_t``."""
        check_is_fitted(self, "spec_")
        Y = self._train if Y is None else check_series(Y)
        init = self.fit_result_.init if Y is self._train else self._init_for(Y)
        return Objective(self.fit_result_.layout, Y, init).sigma(self.theta_)

    def score(self, Y, y=None):
        """Average log-likelihood per observation (higher is better)."""
        check_is_fitted(self, "spec_")
        Y = check_series(Y)
        init = self.fit_result_.init if Y is self._train else self._init_for(Y)
        return -Objective(self.fit_result_.layout, Y, init)(self.theta_)

    def diagnose(self, lags=(2, 3, 4, 5, 6), variance="corrected"):
        """Portmanteau tests on the training residuals for each lag in ``lags``."""
        check_is_fitted(self, "spec_")
        return [pi_test(self.fit_result_, self._train, l, variance=variance) for l in lags]


class FactorExtractor(TransformerMixin, BaseEstimator):
    """Project ``n x n`` covariance matrices onto their top-``n_factors`` eigenspace.

    ``n_factors="auto"`` uses the largest adjacent eigenvalue ratio.
    """

    def __init__(self, n_factors="auto"):
        self.n_factors = n_factors

    def fit(self, Y, y=None):
        Y = check_series(Y, min_length=2)
        diag = eigen_ratios(Y)
        r = diag.suggested_r if self.n_factors == "auto" else int(self.n_factors)
        self.rank_diagnostics_ = diag
        self.decomp_ = extract_factors(Y, r)
        self.n_factors_ = r
        self.n_features_in_ = Y.shape[1]
        return self

    def transform(self, Y):
        check_is_fitted(self, "decomp_")
        return project(self.decomp_, check_series(Y, require_spd=False))

    def inverse_transform(self, Yf):
        check_is_fitted(self, "decomp_")
        return reconstruct(self.decomp_, Yf)


class FactorCBF(BaseEstimator):
    """Factor CBF: fit a CBF model to the factor series and map forecasts back."""

    def __init__(self, n_factors="auto", orders=(1, 1, 1), har=False, structure="diagonal",
                 family="matrix_f", vt=True, compute_cov=True, random_state=0):
        self.n_factors = n_factors
        self.orders = orders
        self.har = har
        self.structure = structure
        self.family = family
        self.vt = vt
        self.compute_cov = compute_cov
        self.random_state = random_state

    def fit(self, Y, y=None):
        Y = check_series(Y)
        self.extractor_ = FactorExtractor(self.n_factors).fit(Y)
        self.cbf_ = CBF(orders=self.orders, har=self.har, structure=self.structure, family=self.family,
                        vt=self.vt, compute_cov=self.compute_cov, random_state=self.random_state)
        self.cbf_.fit(self.extractor_.decomp_.Yf_series)
        self.n_features_in_ = Y.shape[1]
        return self

    def predict(self, Y=None, h=1):
        check_is_fitted(self, "cbf_")
        Yf = None if Y is None else self.extractor_.transform(Y)
        return self.extractor_.inverse_transform(self.cbf_.predict(Yf, h))
