"""Exception and warning classes."""


class NotStationaryError(ValueError):
    """The stationarity condition rho(sum A* + B*) < 1 fails."""


class MomentConditionError(ValueError):
    """A moment of the matrix-F law does not exist for the given degrees of freedom."""


class DegenerateError(ValueError):
    """A statistic is undefined because its variance or spectrum is degenerate."""


class FitError(RuntimeError):
    """Likelihood optimization failed to produce a usable estimate."""


class ConvergenceWarning(UserWarning):
    pass


class StationarityWarning(UserWarning):
    pass


class SingularCovarianceWarning(UserWarning):
    pass
