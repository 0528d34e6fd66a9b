"""cbfvol: conditional BEKK matrix-F models for realized covariance matrices.

The package is organised in layers:

* :mod:`cbfvol.matalg` and :mod:`cbfvol.distributions` supply the linear
  algebra and the matrix-F / Wishart distributions;
* :mod:`cbfvol.model` defines model specifications, simulation and moments;
* :mod:`cbfvol.estimation` fits models by maximum likelihood or variance
  targeting, with :mod:`cbfvol.diagnostics` for portmanteau tests;
* :mod:`cbfvol.factor` and :mod:`cbfvol.forecast` cover factor reduction and
  forecast evaluation;
* :mod:`cbfvol.estimators` wraps all of this in scikit-learn estimators.
"""

import logging

__version__ = "0.1.0"

from .diagnostics import TestResult, pi_test, pi_v_test, residuals
from .distributions import (
    MatrixFParams,
    WishartParams,
    logpdf_matrix_f,
    logpdf_wishart,
    make_rng,
    moment_coefficients,
    sample_matrix_f,
    sample_wishart,
)
from .estimation import FitOptions, FitResult, VtFitResult, fit_mle, fit_vt
from .estimators import CBF, FactorCBF, FactorExtractor
from .exceptions import (
    ConvergenceWarning,
    DegenerateError,
    FitError,
    MomentConditionError,
    NotStationaryError,
    SingularCovarianceWarning,
    StationarityWarning,
)
from .factor import eigen_ratios, extract_factors, fit_f_cbf, reconstruct
from .forecast import ModelEntry, RollingConfig, dm_test, forecast_path, forecast_sigma, rolling_eval
from .io import read_rcov, write_rcov
from .model import (
    CbfSpec,
    HarSpec,
    InitState,
    check_stationarity,
    har_expand,
    persistence,
    second_moment,
    sigma_path,
    simulate,
    unconditional_mean,
)

logging.getLogger(__name__).addHandler(logging.NullHandler())

__all__ = [
    "CBF", "CbfSpec", "ConvergenceWarning", "DegenerateError", "FactorCBF", "FactorExtractor", "FitError",
    "FitOptions", "FitResult", "HarSpec", "InitState", "MatrixFParams", "ModelEntry", "MomentConditionError",
    "NotStationaryError", "RollingConfig", "SingularCovarianceWarning", "StationarityWarning", "TestResult",
    "VtFitResult", "WishartParams", "check_stationarity", "dm_test", "eigen_ratios", "extract_factors",
    "fit_f_cbf", "fit_mle", "fit_vt", "forecast_path", "forecast_sigma", "har_expand", "logpdf_matrix_f",
    "logpdf_wishart", "make_rng", "moment_coefficients", "persistence", "pi_test", "pi_v_test", "read_rcov",
    "reconstruct", "residuals", "rolling_eval", "sample_matrix_f", "sample_wishart", "second_moment",
    "sigma_path", "simulate", "unconditional_mean", "write_rcov",
]
