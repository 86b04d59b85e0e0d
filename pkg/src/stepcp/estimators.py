"""scikit-learn style wrappers around the preprocessing stages and the sampler.

The transformers take a 1-D daily series (NaN for missing days) and chain in
a :class:`sklearn.pipeline.Pipeline`; the last transformer hands an
:class:`~stepcp.events.ExceedanceSeries` to :class:`StepRateChangepoint`.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils import check_array
from sklearn.utils.validation import check_is_fitted

from ._exceptions import DataError
from ._validation import check_random_state
from .events import ExceedanceSeries, log_likelihood
from .posterior import (
    HEIGHT_BANDWIDTH,
    LOCATION_BANDWIDTH,
    k_distribution,
    mean_rate,
    point_estimate,
)
from .preprocess import (
    ANNUAL_OMEGA,
    BinarySequence,
    DailySeries,
    decluster,
    deseasonalise,
    empirical_quantile,
    fit_seasonal,
    impute_missing,
)
from .rjmcmc import ChainConfig, PriorConfig, run_chain

__all__ = ["MissingValueImputer", "SeasonalAdjuster", "ExceedanceExtractor", "StepRateChangepoint"]


def _as_series(X, allow_nan: bool) -> np.ndarray:
    """Validate a daily series given as a 1-D array or a single column."""
    arr = check_array(X, ensure_2d=False, ensure_all_finite="allow-nan" if allow_nan else True, dtype=float)
    if arr.ndim == 2:
        if arr.shape[1] != 1:
            raise DataError(f"expected one column, got {arr.shape[1]}")
        arr = arr[:, 0]
    return arr


def _like(X, values):
    return values.reshape(-1, 1) if np.ndim(X) == 2 else values


class MissingValueImputer(TransformerMixin, BaseEstimator):
    """Fill NaN days by resampling observed values within ``+-half_window`` days."""

    def __init__(self, half_window: int = 65, random_state=None):
        self.half_window = half_window
        self.random_state = random_state

    def fit(self, X, y=None):
        x = _as_series(X, allow_nan=True)
        self.n_missing_ = int(np.isnan(x).sum())
        return self

    def transform(self, X):
        check_is_fitted(self, "n_missing_")
        x = _as_series(X, allow_nan=True)
        out = impute_missing(DailySeries.from_values(x), self.half_window, check_random_state(self.random_state))
        return _like(X, out.values)


class SeasonalAdjuster(TransformerMixin, BaseEstimator):
    """Divide out a fitted annual harmonic (and optional exponential trend)."""

    def __init__(self, include_trend: bool = False, omega: float = ANNUAL_OMEGA):
        self.include_trend = include_trend
        self.omega = omega

    def fit(self, X, y=None):
        x = _as_series(X, allow_nan=False)
        self.fit_ = fit_seasonal(DailySeries.from_values(x), self.include_trend, self.omega)
        self.coef_ = np.array([self.fit_.a, self.fit_.b, self.fit_.c, self.fit_.beta])
        return self

    def transform(self, X):
        check_is_fitted(self, "fit_")
        x = _as_series(X, allow_nan=False)
        return _like(X, deseasonalise(DailySeries.from_values(x), self.fit_).values)

    def inverse_transform(self, X):
        check_is_fitted(self, "fit_")
        x = _as_series(X, allow_nan=False)
        t = np.arange(1, x.size + 1, dtype=float)
        return _like(X, x * np.exp(self.fit_.trend(t)))


class ExceedanceExtractor(TransformerMixin, BaseEstimator):
    """Threshold at an empirical quantile, then decluster with run length ``m0``.

    ``transform`` returns the declustered :class:`ExceedanceSeries`.
    """

    def __init__(self, quantile: float = 0.9, m0: int = 1):
        self.quantile = quantile
        self.m0 = m0

    def fit(self, X, y=None):
        if not 0 < self.quantile < 1:
            raise DataError("quantile must lie in (0, 1)")
        x = _as_series(X, allow_nan=False)
        self.threshold_ = empirical_quantile(x, self.quantile)
        return self

    def transform(self, X):
        check_is_fitted(self, "threshold_")
        x = _as_series(X, allow_nan=False)
        binary = BinarySequence(x > self.threshold_)
        self.declustered_ = decluster(binary, x, self.m0)
        return self.declustered_.events


class StepRateChangepoint(BaseEstimator):
    """Bayesian multiple change-point model for a Poisson step rate.

    ``fit`` runs the reversible-jump sampler and stores the thinned ensemble
    in ``ensemble_`` and the modal-k point estimate in ``rate_``.
    """

    def __init__(
        self,
        mu: float = 4.5,
        k_max: int = 20,
        gamma: float | None = None,
        burn_in: int = 20_000,
        n_updates: int = 500_000,
        thin: int = 40,
        location_bandwidth: float = LOCATION_BANDWIDTH,
        height_bandwidth: float = HEIGHT_BANDWIDTH,
        random_state=None,
    ):
        self.mu = mu
        self.k_max = k_max
        self.gamma = gamma
        self.burn_in = burn_in
        self.n_updates = n_updates
        self.thin = thin
        self.location_bandwidth = location_bandwidth
        self.height_bandwidth = height_bandwidth
        self.random_state = random_state

    @staticmethod
    def _events(X, horizon) -> ExceedanceSeries:
        if isinstance(X, ExceedanceSeries):
            if horizon is not None and horizon != X.horizon:
                raise DataError("horizon conflicts with the ExceedanceSeries horizon")
            return X
        t = check_array(X, ensure_2d=False, dtype=float, ensure_min_samples=0).reshape(-1)
        if horizon is None:
            if t.size == 0:
                raise DataError("horizon is required when there are no events")
            horizon = float(t.max())
        return ExceedanceSeries(np.sort(t), float(horizon))

    def fit(self, X, y=None, horizon: float | None = None):
        events = self._events(X, horizon)
        prior = PriorConfig(self.mu, self.k_max, self.gamma)
        chain = ChainConfig(self.burn_in, self.n_updates, self.thin)
        self.ensemble_ = run_chain(events, prior, chain, check_random_state(self.random_state))
        self.k_distribution_ = k_distribution(self.ensemble_)
        self.rate_ = point_estimate(self.ensemble_, self.location_bandwidth, self.height_bandwidth)
        self.n_changepoints_ = self.rate_.k
        self.changepoints_ = self.rate_.changepoints
        self.heights_ = self.rate_.heights
        self.horizon_ = events.horizon
        self.n_events_ = events.n
        return self

    def predict(self, X) -> np.ndarray:
        """Point-estimate rate at times ``X``."""
        check_is_fitted(self, "rate_")
        return self.rate_(self._grid(X))

    def predict_mean(self, X, n_sub: int | None = None) -> np.ndarray:
        """Posterior-mean rate at times ``X``."""
        check_is_fitted(self, "ensemble_")
        return mean_rate(self.ensemble_, self._grid(X), n_sub, self.random_state)

    def cumulative(self, X) -> np.ndarray:
        check_is_fitted(self, "rate_")
        return self.rate_.cumulative(self._grid(X))

    def score(self, X, y=None) -> float:
        """Log-likelihood of events ``X`` on ``[0, horizon_]`` under the point estimate."""
        check_is_fitted(self, "rate_")
        return log_likelihood(self.rate_, self._events(X, self.horizon_))

    def _grid(self, X) -> np.ndarray:
        t = check_array(X, ensure_2d=False, dtype=float).reshape(-1)
        if np.any((t < 0) | (t > self.horizon_)):
            raise DataError(f"times must lie in [0, {self.horizon_}]")
        return t
