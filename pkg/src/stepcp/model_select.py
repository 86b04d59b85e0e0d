"""Classical and Bayesian comparison of three Poisson models.

* ``M0`` -- homogeneous (constant rate),
* ``M1`` -- log-linear rate ``alpha * exp(-beta t)``,
* ``M2`` -- one change-point.

The uniformity tests (``u_test``, ``mhb_test``, ``ks_test``) and the
change-point statistic all work on ``u_i = t_i / T``. Every test reports the
lower, upper and two-sided p-values; which one is relevant depends on the
alternative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize, special, stats

from ._exceptions import DataError, InsufficientDataError, NumericalError
from ._validation import check_unit_sorted
from .events import ExceedanceSeries

__all__ = [
    "TestResult",
    "BayesFactorResult",
    "u_test",
    "mhb_test",
    "ks_test",
    "changepoint_test",
    "changepoint_pvalue",
    "loglinear_mle",
    "loglinear_rescale",
    "bayes_factor_01",
    "bayes_factor_02",
    "bayes_factor_12",
    "calibrate",
    "split_segments",
    "segment_report",
]

# integration range for the change-point statistic, and log(0.99/0.01)
_CP_LO, _CP_HI = 0.01, 0.99
_XI = math.log(_CP_HI / _CP_LO)
_B01_CONST = 0.6449

EVIDENCE = (
    (0.0, "Negative"),
    (2.0, "Barely worth mentioning"),
    (5.0, "Positive"),
    (10.0, "Strong"),
    (math.inf, "Very strong"),
)


@dataclass(frozen=True)
class TestResult:
    """A test statistic with lower, upper and two-sided p-values.

    ``tail`` names the conventional rejection region: ``"two-sided"`` or
    ``"upper"`` (large statistics reject), and ``p_value`` returns that tail.
    """

    statistic: float
    p_lower: float
    p_upper: float
    p_two_sided: float
    n: int
    method: str
    tail: str = "two-sided"

    @classmethod
    def from_tails(cls, statistic, p_lower, p_upper, n, method, tail: str = "two-sided") -> "TestResult":
        if tail not in ("two-sided", "upper"):
            raise ValueError(f"unknown tail {tail!r}")
        p_lower = float(min(1.0, max(0.0, p_lower)))
        p_upper = float(min(1.0, max(0.0, p_upper)))
        return cls(float(statistic), p_lower, p_upper, min(1.0, 2 * min(p_lower, p_upper)), int(n), method, tail)

    @property
    def p_value(self) -> float:
        return self.p_upper if self.tail == "upper" else self.p_two_sided

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "statistic": self.statistic,
            "n": self.n,
            "tail": self.tail,
            "p_value": self.p_value,
            "p_lower": self.p_lower,
            "p_upper": self.p_upper,
            "p_two_sided": self.p_two_sided,
        }


@dataclass(frozen=True)
class BayesFactorResult:
    """``B`` for the null model against the alternative, with its 2 log B calibration."""

    log_B: float
    quadrature_error: float

    @property
    def B(self) -> float:
        return math.exp(self.log_B) if self.log_B < 709 else math.inf

    @property
    def two_log_B(self) -> float:
        return 2.0 * self.log_B

    @property
    def evidence(self) -> str:
        return calibrate(self.two_log_B)

    def inverse(self) -> "BayesFactorResult":
        return BayesFactorResult(-self.log_B, self.quadrature_error)

    def to_dict(self) -> dict:
        return {
            "B": self.B,
            "log_B": self.log_B,
            "two_log_B": self.two_log_B,
            "evidence": self.evidence,
            "quadrature_error": self.quadrature_error,
        }


def _unit_times(events) -> np.ndarray:
    return np.asarray(events.times, dtype=float) / events.horizon


def u_test(events) -> TestResult:
    """Normal approximation to the centred sum of ``u_i``."""
    n = events.n
    if n < 1:
        raise InsufficientDataError("u_test needs at least one event")
    s = float(np.sum(_unit_times(events)))
    z = (s - n / 2) / math.sqrt(n / 12)
    return TestResult.from_tails(z, stats.norm.cdf(z), stats.norm.sf(z), n, "U")


def mhb_test(events) -> TestResult:
    """Military Handbook statistic ``-2 sum log u_i`` against chi-square(2n)."""
    n = events.n
    if n < 1:
        raise InsufficientDataError("mhb_test needs at least one event")
    u = _unit_times(events)
    if np.any(u <= 0):
        raise DataError("mhb_test is undefined for an event at time 0")
    x = float(-2.0 * np.sum(np.log(u)))
    # regularised incomplete gamma with shape n is the chi-square(2n) law of x
    return TestResult.from_tails(x, special.gammainc(n, x / 2), special.gammaincc(n, x / 2), n, "MHB")


def ks_test(rescaled) -> TestResult:
    """One-sample Kolmogorov-Smirnov distance to the uniform law on [0, 1].

    The p-value is the asymptotic Kolmogorov tail at
    ``(sqrt(n) + 0.12 + 0.11/sqrt(n)) * D``.
    """
    u = check_unit_sorted(rescaled)
    n = u.size
    if n < 1:
        raise InsufficientDataError("ks_test needs at least one value")
    i = np.arange(1, n + 1)
    d = float(max(np.max(i / n - u), np.max(u - (i - 1) / n)))
    rn = math.sqrt(n)
    p_upper = float(special.kolmogorov((rn + 0.12 + 0.11 / rn) * d))
    return TestResult.from_tails(d, 1.0 - p_upper, p_upper, n, "KS", tail="upper")


def _g(i, u, n):
    return i * np.sqrt((1 - u) / u) - (n - i) * np.sqrt(u / (1 - u))


# The tail approximation rises to a maximum above 1 and then falls, turning
# negative for small z. Below its peak it is meaningless, so p = 1 there.
# The peak solves xi z^4 - (2 xi - 1) z^2 + (1 - xi) = 0.
_CP_PEAK = math.sqrt((2 * _XI - 1 + math.sqrt(8 * _XI * _XI - 8 * _XI + 1)) / (2 * _XI))


def changepoint_pvalue(z: float) -> float:
    """Asymptotic upper tail of the change-point statistic, clamped to [0, 1]."""
    if z <= _CP_PEAK:
        return 1.0
    p = math.sqrt(2 / math.pi) * math.exp(-z * z / 2) * (_XI * z - _XI / z + 1 / z)
    return min(1.0, max(0.0, p))


def changepoint_test(events) -> TestResult:
    """Maximal standardised deviation statistic for one change-point against M0."""
    n = events.n
    u = _unit_times(events)
    i = np.arange(1, n + 1)
    ok = (u >= _CP_LO) & (u <= _CP_HI)
    if not ok.any():
        raise InsufficientDataError("no event with t/T inside [0.01, 0.99]")
    u, i = u[ok], i[ok]
    stat = float(max(np.max(np.abs(_g(i - 1, u, n))), np.max(np.abs(_g(i, u, n)))) / math.sqrt(n))
    p = changepoint_pvalue(stat)
    return TestResult.from_tails(stat, 1.0 - p, p, n, "changepoint", tail="upper")


def _mean_ratio(x: float) -> float:
    """``1/x - 1/(e^x - 1)``: the mean of ``u`` under a log-linear law with slope ``x``."""
    if abs(x) < 1e-3:
        x2 = x * x
        return 0.5 - x / 12 + x * x2 / 720 - x * x2 * x2 / 30240
    if x > 0:
        return 1.0 / x - math.exp(-x) / -math.expm1(-x)
    return 1.0 / x - 1.0 / math.expm1(x)


def loglinear_mle(events) -> float:
    """Maximum-likelihood slope ``beta`` of a rate ``alpha exp(-beta t)``.

    Solves ``1/(beta T) - e^{-beta T}/(1 - e^{-beta T}) = S_n/n`` by bracketed
    root finding on ``x = beta T``; ``S_n/n = 1/2`` gives ``beta = 0``.
    """
    n = events.n
    if n < 2:
        raise InsufficientDataError("loglinear_mle needs at least two events")
    target = float(np.mean(_unit_times(events)))
    if target == 0.5:
        return 0.0
    if not 0 < target < 1:
        raise DataError("mean of t/T must lie strictly inside (0, 1)")
    f = lambda x: _mean_ratio(x) - target  # noqa: E731
    lo, hi = -1.0, 1.0
    while f(lo) * f(hi) > 0:
        lo, hi = 2 * lo, 2 * hi
        if hi > 1e7:
            raise NumericalError(f"could not bracket the log-linear slope (mean t/T = {target})")
    x = optimize.brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    return x / events.horizon


def loglinear_rescale(events, beta: float) -> np.ndarray:
    """``(1 - e^{-beta t_i}) / (1 - e^{-beta T})``; reduces to ``t_i / T`` at ``beta = 0``."""
    t = np.asarray(events.times, dtype=float)
    T = events.horizon
    if beta == 0:
        return t / T
    return np.clip(np.expm1(-beta * t) / math.expm1(-beta * T), 0.0, 1.0)


def _log_quad(logf, a: float, b: float, anchors, scales, epsrel: float):
    """``log int_a^b exp(logf)`` with breakpoints clustered around the anchor points.

    ``anchors`` are candidate maxima of ``logf`` and ``scales`` their
    characteristic widths; breakpoints at geometric distances keep sharp
    peaks resolved. Returns ``(log integral, relative error estimate)``.
    """
    peak = max(logf(x) for x in anchors)
    pts = set()
    # breakpoints closer than this to an end would make a degenerate subinterval
    gap = 1e-9 * (b - a)
    for x0, w in zip(anchors, scales):
        if not np.isfinite(w) or w <= 0:
            continue
        d = w
        while d < (b - a):
            for p in (x0 - d, x0 + d):
                if a + gap < p < b - gap:
                    pts.add(p)
            d *= 4
    edges = [a, *sorted(pts), b]
    total, err = 0.0, 0.0
    f = lambda x: math.exp(logf(x) - peak)  # noqa: E731
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, e = integrate.quad(f, lo, hi, epsabs=0.0, epsrel=epsrel, limit=200)
        total += val
        err += e
    if not total > 0:
        raise NumericalError(f"quadrature returned a non-positive integral on [{a}, {b}]")
    return peak + math.log(total), err / total


def _phi2(y: float) -> float:
    """Second derivative of ``log(y / (1 - e^{-y}))``; always negative."""
    if y < 1e-2:
        return -1 / 12 + y * y / 240
    return -1 / (y * y) + 1 / (4 * math.sinh(y / 2) ** 2)


def _log_b01_integrand(S: float, m: int):
    def logf(y):
        if y < 1e-8:
            return -S * y + m * (y / 2)
        return -S * y + m * (math.log(y) - math.log(-math.expm1(-y)))

    return logf


def bayes_factor_01(events, epsrel: float = 1e-10) -> BayesFactorResult:
    """Bayes factor of the homogeneous model against the log-linear one."""
    n = events.n
    if n < 2:
        raise InsufficientDataError("bayes_factor_01 needs at least two events")
    S = float(np.sum(_unit_times(events)))
    m = n - 1
    logf = _log_b01_integrand(S, m)
    ratio = S / m
    # mode where (n-1) * mean_ratio(y) = S; at 0 when S/(n-1) >= 1/2
    if ratio >= 0.5:
        mode = 0.0
    else:
        mode = optimize.brentq(lambda y: _mean_ratio(y) - ratio, 1e-12, 1e7, xtol=1e-12)
    # peak width from the curvature, or from the slope when the mode sits at 0
    width = 1 / math.sqrt(m * -_phi2(mode))
    if mode == 0.0 and S - m / 2 > 0:
        width = min(width, 1 / (S - m / 2))
    upper = mode + width
    while logf(upper) - logf(mode) > -80:
        upper = mode + 2 * (upper - mode)
        if upper > 1e9:
            raise NumericalError("bayes_factor_01 integrand does not decay")
    log_int, rel = _log_quad(logf, 0.0, upper, [mode], [width], epsrel)
    log_B = math.log(_B01_CONST * m) - log_int
    return BayesFactorResult(log_B, rel)


def _log_j(i: int, n: int, lo: float, hi: float, epsrel: float):
    """``log J_i`` after the substitution ``x = sin^2(theta)``."""
    if hi <= lo:
        return -math.inf, 0.0
    a, b = math.asin(math.sqrt(lo)), math.asin(math.sqrt(hi))
    if (i > 0 and a == 0.0) or (i < n and b >= math.pi / 2):
        raise NumericalError(f"J_{i} diverges: an event sits on the boundary of [0, 1]")

    def logf(th):
        out = math.log(2.0)
        if i:
            out -= 2 * i * math.log(math.sin(th))
        if n - i:
            out -= 2 * (n - i) * math.log(math.cos(th))
        return out

    def slope(th):
        out = 0.0
        if i:
            out -= 2 * i / math.tan(th)
        if n - i:
            out += 2 * (n - i) * math.tan(th)
        return out

    scales = []
    for th in (a, b):
        try:
            s = abs(slope(th))
        except ZeroDivisionError:
            s = 0.0
        scales.append(1.0 / s if s > 0 else b - a)
    try:
        return _log_quad(logf, a, b, [a, b], scales, epsrel)
    except NumericalError as exc:
        raise NumericalError(f"quadrature failed for J_{i}: {exc}") from exc


def bayes_factor_02(events, epsrel: float = 1e-10) -> BayesFactorResult:
    """Bayes factor of the homogeneous model against a single change-point."""
    n = events.n
    if n < 1:
        raise InsufficientDataError("bayes_factor_02 needs at least one event")
    u = np.concatenate(([0.0], _unit_times(events), [1.0]))
    terms, errs = [], []
    for i in range(n + 1):
        log_j, rel = _log_j(i, n, float(u[i]), float(u[i + 1]), epsrel)
        terms.append(log_j + special.gammaln(i + 0.5) + special.gammaln(n - i + 0.5))
        errs.append(rel)
    terms = np.asarray(terms)
    log_den = special.logsumexp(terms)
    log_num = math.log(4 * math.sqrt(math.pi)) + special.gammaln(n + 0.5)
    weights = np.exp(terms - log_den)
    return BayesFactorResult(float(log_num - log_den), float(np.dot(weights, errs)))


def bayes_factor_12(events, epsrel: float = 1e-10) -> BayesFactorResult:
    """Bayes factor of the log-linear model against the change-point model, ``B02 / B01``."""
    b01 = bayes_factor_01(events, epsrel)
    b02 = bayes_factor_02(events, epsrel)
    return BayesFactorResult(b02.log_B - b01.log_B, b01.quadrature_error + b02.quadrature_error)


def calibrate(two_log_B: float) -> str:
    """Evidence category for ``2 log B``; each bucket is closed on the left."""
    if not math.isfinite(two_log_B):
        return "Very strong" if two_log_B > 0 else "Negative"
    for upper, label in EVIDENCE:
        if two_log_B < upper:
            return label
    return EVIDENCE[-1][1]


def split_segments(events, changepoints, midday: bool = True):
    """Cut an event series at the change-points into per-segment series on ``[0, length]``.

    With ``midday`` the change-points are rounded to whole days, segment
    ``j`` covers days ``a+1 .. b`` and each event is placed at the middle of
    its day (``t - a - 1/2``), so no event lands on a segment boundary.
    Otherwise segments are ``[a, b)`` (the last one closed) with raw offsets.
    Returns a list of ``(start, stop, ExceedanceSeries)``.
    """
    T = events.horizon
    cps = sorted(float(c) for c in changepoints)
    if midday:
        cps = sorted({int(round(c)) for c in cps if 0 < round(c) < T})
    bounds = [0.0, *cps, T]
    t = np.asarray(events.times, dtype=float)
    out = []
    for j, (a, b) in enumerate(zip(bounds[:-1], bounds[1:])):
        if midday:
            sel = t[(t > a) & (t <= b)] - a - 0.5
            sel = sel[sel > 0]
        else:
            last = j == len(bounds) - 2
            mask = (t >= a) & ((t <= b) if last else (t < b))
            sel = t[mask] - a
            sel = sel[sel > 0]
        out.append((a, b, ExceedanceSeries(sel, b - a)))
    return out


def _run(fn, *args):
    try:
        return fn(*args).to_dict()
    except (DataError, NumericalError) as exc:
        return {"skipped": str(exc)}


def segment_report(events, changepoints, midday: bool = True) -> list[dict]:
    """All uniformity tests and Bayes factors for each inter-change-point segment."""
    report = []
    for a, b, seg in split_segments(events, changepoints, midday):
        block = {"start": a, "stop": b, "n": seg.n}
        if seg.n < 2:
            block["skipped"] = f"segment has {seg.n} event(s); at least 2 are needed"
            report.append(block)
            continue
        u = np.sort(_unit_times(seg))
        block["tests"] = {
            "U": _run(u_test, seg),
            "MHB": _run(mhb_test, seg),
            "KS": _run(ks_test, u),
            "changepoint": _run(changepoint_test, seg),
        }
        try:
            beta = loglinear_mle(seg)
            u1 = loglinear_rescale(seg, beta)
            resc = ExceedanceSeries.from_unsorted(u1[u1 > 0], 1.0)
            block["loglinear"] = {
                "beta": beta,
                "U": _run(u_test, resc),
                "MHB": _run(mhb_test, resc),
                "KS": _run(ks_test, u1),
            }
        except (DataError, NumericalError) as exc:
            block["loglinear"] = {"skipped": str(exc)}
        bf = {}
        for name, fn in (("B01", bayes_factor_01), ("B02", bayes_factor_02), ("B12", bayes_factor_12)):
            bf[name] = _run(fn, seg)
        block["bayes_factors"] = bf
        report.append(block)
    return report
