"""From a raw daily concentration series to a declustered exceedance series.

The stages are independent functions so they can be composed or tested in
isolation; :mod:`stepcp.estimators` wraps them as scikit-learn transformers.
Day ``i`` (1-based) of a series is the event time ``float(i)``.
"""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from ._exceptions import DataError, ImputationError
from ._validation import check_random_state
from .events import ExceedanceSeries
from .model_select import TestResult

__all__ = [
    "DailySeries",
    "SeasonalFit",
    "BinarySequence",
    "Declustered",
    "impute_missing",
    "fit_seasonal",
    "deseasonalise",
    "threshold_exceedances",
    "decluster",
    "runs_test",
    "ANNUAL_OMEGA",
]

ANNUAL_OMEGA = 2 * math.pi / 365


@dataclass(frozen=True)
class DailySeries:
    """Consecutive daily observations with an explicit missing mask."""

    start_date: dt.date
    values: np.ndarray
    missing: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        m = np.asarray(self.missing, dtype=bool).reshape(-1)
        if v.size < 1 or v.size != m.size:
            raise DataError("values and missing mask must have equal nonzero length")
        obs = v[~m]
        if not np.all(np.isfinite(obs)) or np.any(obs <= 0):
            bad = int(np.flatnonzero(~m & ~(np.isfinite(v) & (v > 0)))[0])
            raise DataError(f"observed values must be positive and finite (day {bad + 1})")
        v = v.copy()
        v[m] = np.nan
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "missing", m)

    @classmethod
    def from_values(cls, values, start_date: dt.date | None = None) -> "DailySeries":
        """Build a series treating NaN entries as missing."""
        v = np.asarray(values, dtype=float)
        return cls(start_date or dt.date(1970, 1, 1), v, np.isnan(v))

    def __len__(self) -> int:
        return int(self.values.size)

    @property
    def days(self) -> np.ndarray:
        """1-based day indices."""
        return np.arange(1, len(self) + 1, dtype=float)

    @property
    def complete(self) -> bool:
        return not self.missing.any()

    def date_of(self, day: float) -> dt.date:
        """Calendar date of a (possibly fractional) 1-based day index."""
        return self.start_date + dt.timedelta(days=int(round(day)) - 1)


@dataclass(frozen=True)
class SeasonalFit:
    """Coefficients of ``log X(t) ~ a cos wt + b sin wt + c - beta t``."""

    a: float
    b: float
    c: float
    beta: float = 0.0
    omega: float = ANNUAL_OMEGA

    def trend(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return self.a * np.cos(self.omega * t) + self.b * np.sin(self.omega * t) + self.c - self.beta * t

    def to_text(self) -> str:
        return "".join(f"{k}={getattr(self, k)!r}\n" for k in ("a", "b", "c", "beta", "omega"))

    @classmethod
    def from_text(cls, text: str) -> "SeasonalFit":
        kv = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, val = line.partition("=")
            kv[key.strip()] = float(val)
        return cls(**kv)


@dataclass(frozen=True)
class BinarySequence:
    """Above/below-threshold symbols; ``positions`` are 1-based start days of each symbol."""

    symbols: np.ndarray
    positions: np.ndarray | None = None

    def __post_init__(self):
        s = np.asarray(self.symbols, dtype=bool).reshape(-1)
        object.__setattr__(self, "symbols", s)
        if self.positions is None:
            object.__setattr__(self, "positions", np.arange(1, s.size + 1, dtype=float))
        elif len(self.positions) != s.size:
            raise DataError("positions must align with symbols")

    @classmethod
    def from_string(cls, pattern: str) -> "BinarySequence":
        return cls(np.array([ch == "+" for ch in pattern if ch in "+-−"]))

    def to_string(self) -> str:
        return "".join("+" if x else "-" for x in self.symbols)

    @property
    def n(self) -> int:
        return int(self.symbols.size)

    @property
    def n_plus(self) -> int:
        return int(self.symbols.sum())

    def window(self, start: float, stop: float) -> "BinarySequence":
        """Symbols whose position lies in ``[start, stop)``."""
        keep = (self.positions >= start) & (self.positions < stop)
        return BinarySequence(self.symbols[keep], self.positions[keep])


@dataclass(frozen=True)
class Declustered:
    events: ExceedanceSeries
    relabelled: BinarySequence
    thinned: BinarySequence
    n_clusters: int


def impute_missing(series: DailySeries, half_window: int = 65, rng=None) -> DailySeries:
    """Fill each missing day with a draw from the observed values within ``+-half_window`` days.

    Only originally observed values are resampled; windows are truncated at
    the series edges.
    """
    if series.complete:
        return series
    rng = check_random_state(rng)
    v = series.values
    observed = ~series.missing
    # windows are located by binary search over the observed indices
    obs_idx = np.flatnonzero(observed)
    obs_val = v[obs_idx]
    out = v.copy()
    for i in np.flatnonzero(series.missing):
        lo = np.searchsorted(obs_idx, i - half_window, side="left")
        hi = np.searchsorted(obs_idx, i + half_window, side="right")
        if hi <= lo:
            raise ImputationError(f"no observed value within {half_window} days of day {i + 1}")
        out[i] = obs_val[lo + rng.integers(hi - lo)]
    return DailySeries(series.start_date, out, np.zeros(len(series), dtype=bool))


def fit_seasonal(series: DailySeries, include_trend: bool = False, omega: float = ANNUAL_OMEGA) -> SeasonalFit:
    """Least-squares annual harmonic (and optional log-linear trend) on ``log X``."""
    if not series.complete:
        raise DataError("fit_seasonal needs a complete series; impute first")
    t = series.days
    cols = [np.cos(omega * t), np.sin(omega * t), np.ones_like(t)]
    if include_trend:
        cols.append(-t)
    X = np.column_stack(cols)
    coef, *_ = np.linalg.lstsq(X, np.log(series.values), rcond=None)
    beta = float(coef[3]) if include_trend else 0.0
    return SeasonalFit(float(coef[0]), float(coef[1]), float(coef[2]), beta, omega)


def deseasonalise(series: DailySeries, fit: SeasonalFit) -> DailySeries:
    """Remove the fitted trend: ``log X~ = log X + beta t - a cos wt - b sin wt - c``."""
    if not series.complete:
        raise DataError("deseasonalise needs a complete series; impute first")
    values = np.exp(np.log(series.values) - fit.trend(series.days))
    return DailySeries(series.start_date, values, series.missing)


def empirical_quantile(values, q: float) -> float:
    """Order statistic of rank ``ceil(q n)`` (1-based)."""
    x = np.sort(np.asarray(values, dtype=float))
    rank = max(1, math.ceil(q * x.size - 1e-9))
    return float(x[rank - 1])


def threshold_exceedances(series: DailySeries, quantile: float = 0.9):
    """Days whose value strictly exceeds the empirical ``quantile``.

    Returns ``(threshold, events, binary)``.
    """
    if not 0 < quantile < 1:
        raise DataError("quantile must lie in (0, 1)")
    if not series.complete:
        raise DataError("threshold_exceedances needs a complete series")
    thr = empirical_quantile(series.values, quantile)
    above = series.values > thr
    events = ExceedanceSeries(series.days[above], float(len(series)))
    return thr, events, BinarySequence(above)


def decluster(binary: BinarySequence, values, m0: int = 1) -> Declustered:
    """Replace each cluster of exceedances by the day of its largest value.

    A cluster opens at a ``+`` and closes after ``m0`` consecutive ``-``.
    Ties within a cluster go to the earliest day. The relabelled sequence
    merges each representative with the next ``m0`` symbols into a single
    ``+`` token, which is what the runs test should see.
    """
    if m0 < 1:
        raise DataError("m0 must be at least 1")
    sym = binary.symbols
    vals = np.asarray(values, dtype=float).reshape(-1)
    if vals.size != sym.size:
        raise DataError("values must align with the binary sequence")
    reps = []
    i, n = 0, sym.size
    while i < n:
        if not sym[i]:
            i += 1
            continue
        best, gap, j = i, 0, i + 1
        while j < n and gap < m0:
            if sym[j]:
                gap = 0
                if vals[j] > vals[best]:
                    best = j
            else:
                gap += 1
            j += 1
        reps.append(best)
        i = j
    thinned = np.zeros(n, dtype=bool)
    thinned[reps] = True

    tokens, starts = [], []
    i = 0
    while i < n:
        tokens.append(thinned[i])
        starts.append(binary.positions[i])
        i += 1 + m0 if thinned[i] else 1
    relabelled = BinarySequence(np.array(tokens, dtype=bool), np.array(starts, dtype=float))
    events = ExceedanceSeries(binary.positions[thinned], float(binary.positions[-1]) if n else 1.0)
    return Declustered(events, relabelled, BinarySequence(thinned, binary.positions), len(reps))


def runs_test(binary: BinarySequence) -> TestResult:
    """Wald-Wolfowitz runs test with the normal approximation, no continuity correction."""
    n, n_plus = binary.n, binary.n_plus
    if n < 2 or n_plus in (0, n):
        raise DataError("runs test needs both symbols present in a sequence of length >= 2")
    runs = 1 + int(np.count_nonzero(binary.symbols[1:] != binary.symbols[:-1]))
    mu = 1 + 2 * n_plus * (n - n_plus) / n
    var = (mu - 1) * (mu - 2) / (n - 1)
    z = (runs - mu) / math.sqrt(var) if var > 0 else 0.0
    return TestResult.from_tails(z, stats.norm.cdf(z), stats.norm.sf(z), n, "runs")
