"""Synthetic daily series and event sets for demos and tests."""

from __future__ import annotations

import datetime as dt
import math

import numpy as np

from ._validation import check_random_state
from .events import ExceedanceSeries, StepRate, simulate_direct
from .preprocess import ANNUAL_OMEGA, DailySeries

__all__ = ["NO2_LIKE", "no2_like_rate", "daily_series", "clustered_events"]

# geometry of the reference application: day 1 is 4 January 1993
NO2_LIKE = {"horizon": 6206.0, "changepoint": 2490.0, "h0": 0.1032, "h1": 0.0357, "start": dt.date(1993, 1, 4)}


def no2_like_rate() -> StepRate:
    g = NO2_LIKE
    return StepRate([g["changepoint"]], [g["h0"], g["h1"]], g["horizon"])


def daily_series(
    length: int = 6206,
    changepoint: int | None = 2490,
    shift: float = -0.35,
    phi: float = 0.5,
    sigma: float = 0.45,
    amplitude: float = 0.3,
    missing: float = 0.0,
    start: dt.date = NO2_LIKE["start"],
    rng=None,
) -> DailySeries:
    """Log-normal series with an annual cycle, AR(1) noise and a level shift.

    ``log X_t = amplitude cos(wt) + 3 + shift [t > changepoint] + e_t``
    with ``e_t = phi e_{t-1} + N(0, sigma^2)``. The AR(1) noise makes
    threshold exceedances cluster on adjacent days. A fraction ``missing``
    of days is blanked at random.
    """
    rng = check_random_state(rng)
    t = np.arange(1, length + 1, dtype=float)
    z = rng.normal(0.0, sigma, length)
    e = np.empty(length)
    e[0] = z[0] / math.sqrt(1 - phi * phi)
    for i in range(1, length):
        e[i] = phi * e[i - 1] + z[i]
    log_x = amplitude * np.cos(ANNUAL_OMEGA * t) + 3.0 + e
    if changepoint is not None:
        log_x += shift * (t > changepoint)
    values = np.exp(log_x)
    if missing > 0:
        values[rng.random(length) < missing] = np.nan
    return DailySeries.from_values(values, start)


def clustered_events(rate: StepRate, rng=None, repeat_prob: float = 1.0) -> ExceedanceSeries:
    """Integer-day events from ``rate``, each followed on the next day by a copy with ``repeat_prob``."""
    rng = check_random_state(rng)
    base = np.unique(np.ceil(simulate_direct(rate, rng).times))
    extra = base[rng.random(base.size) < repeat_prob] + 1
    days = np.unique(np.concatenate([base, extra]))
    return ExceedanceSeries(days[days <= rate.horizon], rate.horizon)
