"""Small input-checking helpers used by the public functions and estimators."""

from __future__ import annotations

import numbers

import numpy as np

from ._exceptions import DataError


def check_random_state(seed) -> np.random.Generator:
    """Turn ``seed`` into a :class:`numpy.random.Generator`.

    Accepts ``None``, an integer, a ``SeedSequence`` or an existing generator
    (returned unchanged so that callers share the stream).
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None or isinstance(seed, (numbers.Integral, np.random.SeedSequence)):
        return np.random.default_rng(seed)
    raise TypeError(f"cannot build a random generator from {seed!r}")


def check_times(times, horizon: float) -> np.ndarray:
    """Validate event times: finite, strictly increasing, inside ``(0, horizon]``."""
    t = np.asarray(times, dtype=float).reshape(-1)
    if not np.isfinite(horizon) or horizon <= 0:
        raise DataError(f"horizon must be a positive finite number, got {horizon!r}")
    if t.size == 0:
        return t
    if not np.all(np.isfinite(t)):
        raise DataError("event times must be finite")
    if t[0] <= 0 or t[-1] > horizon:
        raise DataError(f"event times must lie in (0, {horizon}]")
    if np.any(np.diff(t) <= 0):
        raise DataError("event times must be strictly increasing")
    return t


def check_unit_sorted(u) -> np.ndarray:
    u = np.asarray(u, dtype=float).reshape(-1)
    if u.size and (u[0] < 0 or u[-1] > 1):
        raise DataError("values must lie in [0, 1]")
    if np.any(np.diff(u) < 0):
        raise DataError("values must be sorted in nondecreasing order")
    return u


def check_positive(name: str, value: float) -> float:
    value = float(value)
    if not (np.isfinite(value) and value > 0):
        raise DataError(f"{name} must be positive and finite, got {value!r}")
    return value
