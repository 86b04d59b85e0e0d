"""Point-process primitives: event series, step rates, likelihood and simulators.

Time is measured in days on ``[0, T]``. A step rate is constant on each
half-open interval ``[s_j, s_{j+1})``; the last interval is closed at ``T`` so
that an event on the final day is counted.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ._exceptions import DataError
from ._validation import check_positive, check_random_state, check_times

logger = logging.getLogger(__name__)

__all__ = [
    "ExceedanceSeries",
    "StepRate",
    "CountingPath",
    "cumulative_rate",
    "log_likelihood",
    "simulate_direct",
    "simulate_thinning",
    "simulate_conditional",
    "time_rescale",
    "counting_path",
]


@dataclass(frozen=True)
class ExceedanceSeries:
    """Strictly increasing event times on ``(0, horizon]``."""

    times: np.ndarray
    horizon: float

    def __post_init__(self):
        object.__setattr__(self, "horizon", check_positive("horizon", self.horizon))
        t = check_times(self.times, self.horizon)
        t.setflags(write=False)
        object.__setattr__(self, "times", t)

    @property
    def n(self) -> int:
        return int(self.times.size)

    def __len__(self) -> int:
        return self.n

    @classmethod
    def from_unsorted(cls, times, horizon: float) -> "ExceedanceSeries":
        """Sort ``times`` and drop exact duplicates (logged) before validating."""
        t = np.sort(np.asarray(times, dtype=float).reshape(-1))
        keep = np.ones(t.size, dtype=bool)
        if t.size:
            keep[1:] = np.diff(t) > 0
            keep &= t > 0
        dropped = int(t.size - keep.sum())
        if dropped:
            logger.warning("discarded %d duplicate or zero event time(s)", dropped)
        return cls(t[keep], horizon)


@dataclass(frozen=True)
class StepRate:
    """Piecewise-constant intensity ``h_j`` on ``[s_j, s_{j+1})``.

    ``changepoints`` holds the interior points ``s_1 < ... < s_k``; the
    sentinels ``s_0 = 0`` and ``s_{k+1} = T`` are implicit.
    """

    changepoints: np.ndarray
    heights: np.ndarray
    horizon: float
    _bounds: np.ndarray = field(init=False, repr=False, compare=False)
    _cum: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        T = check_positive("horizon", self.horizon)
        s = np.asarray(self.changepoints, dtype=float).reshape(-1)
        h = np.asarray(self.heights, dtype=float).reshape(-1)
        if h.size != s.size + 1:
            raise DataError(
                f"need k+1 heights for k changepoints, got {h.size} heights and {s.size} changepoints"
            )
        if not np.all(np.isfinite(h)) or np.any(h <= 0):
            raise DataError("heights must be positive and finite")
        bounds = np.concatenate(([0.0], s, [T]))
        if np.any(np.diff(bounds) <= 0):
            raise DataError("changepoints must be strictly increasing inside (0, T)")
        cum = np.concatenate(([0.0], np.cumsum(h * np.diff(bounds))))
        for arr in (s, h, bounds, cum):
            arr.setflags(write=False)
        object.__setattr__(self, "horizon", T)
        object.__setattr__(self, "changepoints", s)
        object.__setattr__(self, "heights", h)
        object.__setattr__(self, "_bounds", bounds)
        object.__setattr__(self, "_cum", cum)

    @property
    def k(self) -> int:
        return int(self.changepoints.size)

    @property
    def bounds(self) -> np.ndarray:
        """``[0, s_1, ..., s_k, T]``."""
        return self._bounds

    @property
    def total(self) -> float:
        """``Lambda(T)``, the expected number of events on ``[0, T]``."""
        return float(self._cum[-1])

    def interval_index(self, t) -> np.ndarray:
        """Index ``j`` of the interval ``[s_j, s_{j+1})`` holding each ``t`` (``T`` maps to ``k``)."""
        j = np.searchsorted(self.changepoints, np.asarray(t, dtype=float), side="right")
        return j

    def __call__(self, t):
        """Evaluate ``lambda(t)``; vectorised."""
        return self.heights[self.interval_index(t)]

    def cumulative(self, t):
        """``Lambda(t)``; vectorised, no domain check."""
        t = np.asarray(t, dtype=float)
        j = self.interval_index(t)
        return self._cum[j] + self.heights[j] * (t - self._bounds[j])

    def inverse_cumulative(self, y):
        """Solve ``Lambda(t) = y`` exactly on each linear piece."""
        y = np.asarray(y, dtype=float)
        j = np.clip(np.searchsorted(self._cum, y, side="right") - 1, 0, self.k)
        t = self._bounds[j] + (y - self._cum[j]) / self.heights[j]
        return np.clip(t, 0.0, self.horizon)

    def rescaled(self, factor: float) -> "StepRate":
        """The same rate with time measured in units ``factor`` times smaller."""
        return StepRate(self.changepoints * factor, self.heights / factor, self.horizon * factor)


@dataclass(frozen=True)
class CountingPath:
    """Counts ``N(t)`` of events up to and including each grid time."""

    grid: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        c = np.asarray(self.counts)
        if g.shape != c.shape:
            raise DataError("grid and counts must have equal length")
        if c.size and (c[0] < 0 or np.any(np.diff(c) < 0)):
            raise DataError("counts must be nonnegative and nondecreasing")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "counts", c)


def counting_path(events: ExceedanceSeries, grid) -> CountingPath:
    grid = np.asarray(grid, dtype=float)
    return CountingPath(grid, np.searchsorted(events.times, grid, side="right"))


def cumulative_rate(rate: StepRate, t: float) -> float:
    """``Lambda(t) = int_0^t lambda(u) du`` for ``0 <= t <= T``."""
    if not 0 <= t <= rate.horizon:
        raise DataError(f"t={t} outside [0, {rate.horizon}]")
    return float(rate.cumulative(t))


def interval_counts(rate: StepRate, events: ExceedanceSeries) -> np.ndarray:
    """Number of events in each interval of ``rate``."""
    return np.bincount(rate.interval_index(events.times), minlength=rate.k + 1)


def log_likelihood(rate: StepRate, events: ExceedanceSeries) -> float:
    """NHPP log-likelihood ``sum_i log lambda(t_i) - Lambda(T)`` in per-interval form."""
    if not math.isclose(rate.horizon, events.horizon, rel_tol=1e-12):
        raise DataError("rate and events have different horizons")
    n_j = interval_counts(rate, events)
    lengths = np.diff(rate.bounds)
    return float(np.sum(n_j * np.log(rate.heights)) - np.sum(rate.heights * lengths))


def simulate_direct(rate: StepRate, rng=None) -> ExceedanceSeries:
    """Poisson count per constant piece, then uniform positions within it."""
    rng = check_random_state(rng)
    b = rate.bounds
    lengths = np.diff(b)
    counts = rng.poisson(rate.heights * lengths)
    parts = [rng.uniform(b[j], b[j + 1], size=c) for j, c in enumerate(counts)]
    times = np.concatenate(parts) if parts else np.empty(0)
    return ExceedanceSeries.from_unsorted(times, rate.horizon)


def simulate_thinning(
    rate_fn: Callable, lambda_star: float, T: float, rng=None
) -> ExceedanceSeries:
    """Acceptance/rejection from a dominating homogeneous process.

    ``rate_fn`` must accept an array of times. Candidates from a rate
    ``lambda_star`` process are kept with probability ``rate_fn(t)/lambda_star``.
    """
    rng = check_random_state(rng)
    if not lambda_star > 0:
        raise DataError("lambda_star must be positive")
    T = check_positive("T", T)
    m = rng.poisson(lambda_star * T)
    cand = np.sort(rng.uniform(0.0, T, size=m))
    lam = np.asarray(rate_fn(cand), dtype=float)
    if lam.shape != cand.shape:
        lam = np.broadcast_to(lam, cand.shape)
    if np.any(lam > lambda_star * (1 + 1e-12)):
        bad = float(cand[np.argmax(lam > lambda_star)])
        raise DataError(f"rate_fn({bad}) exceeds lambda_star={lambda_star}")
    keep = rng.uniform(size=m) * lambda_star < lam
    return ExceedanceSeries.from_unsorted(cand[keep], T)


def simulate_conditional(rate: StepRate, n: int, rng=None) -> ExceedanceSeries:
    """Exactly ``n`` events, i.i.d. with density ``lambda(t)/Lambda(T)``, sorted."""
    rng = check_random_state(rng)
    if n < 0:
        raise DataError("n must be nonnegative")
    y = rng.uniform(0.0, rate.total, size=int(n))
    times = np.sort(rate.inverse_cumulative(y))
    series = ExceedanceSeries.from_unsorted(times, rate.horizon)
    # duplicates have probability zero; top up so the count contract holds
    while series.n < n:
        extra = rate.inverse_cumulative(rng.uniform(0.0, rate.total, size=n - series.n))
        series = ExceedanceSeries.from_unsorted(np.concatenate((series.times, extra)), rate.horizon)
    return series


def time_rescale(events: ExceedanceSeries, cum: Callable) -> np.ndarray:
    """Map event times to ``cum(t_i)/cum(T)``; uniform order statistics under the true rate."""
    total = float(cum(events.horizon))
    if not total > 0:
        raise DataError("cumulative rate vanishes at the horizon")
    u = np.asarray(cum(events.times), dtype=float) / total
    return np.clip(u, 0.0, 1.0)
