"""Homogeneity tests, the log-linear fit, Bayes factors and the segment report."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from stepcp import DataError
from stepcp._exceptions import InsufficientDataError
from stepcp.events import ExceedanceSeries, StepRate, simulate_direct
from stepcp.model_select import (
    BayesFactorResult,
    _g,
    _mean_ratio,
    bayes_factor_01,
    bayes_factor_02,
    bayes_factor_12,
    calibrate,
    changepoint_pvalue,
    changepoint_test,
    ks_test,
    loglinear_mle,
    loglinear_rescale,
    mhb_test,
    segment_report,
    split_segments,
    u_test,
)
from stepcp.model_select import TestResult as Result  # aliased so pytest does not collect it


def _series(times, T=1.0):
    return ExceedanceSeries(np.sort(np.asarray(times, dtype=float)), float(T))


def _uniform(rng, n, T=1.0):
    return _series(rng.uniform(0, T, n), T)


def _loglinear_events(rng, beta, T, expected_n):
    """Inverse-CDF draw from a rate proportional to exp(-beta t) on [0, T]."""
    n = rng.poisson(expected_n)
    u = rng.uniform(size=n)
    return _series(-np.log1p(u * math.expm1(-beta * T)) / beta, T)


def _b02_closed_form(u):
    """B02 with J_i expanded binomially after the substitution y = x/(1-x)."""
    n = len(u)
    y = np.concatenate(([0.0], np.asarray(u) / (1 - np.asarray(u)), [np.inf]))
    den = 0.0
    for i in range(n + 1):
        J = 0.0
        for m in range(n):
            e = m - i + 0.5

            def prim(v):
                if v == 0.0:
                    return 0.0
                if math.isinf(v):
                    return 0.0  # e < 0 whenever the upper limit is infinite
                return v**e / e

            J += math.comb(n - 1, m) * (prim(y[i + 1]) - prim(y[i]))
        den += J * math.gamma(i + 0.5) * math.gamma(n - i + 0.5)
    return 4 * math.sqrt(math.pi) * math.gamma(n + 0.5) / den


times_and_horizon = st.tuples(
    st.lists(st.integers(2, 98), min_size=2, max_size=30, unique=True).map(lambda xs: [x / 100 for x in xs]),
    st.floats(0.5, 1e4),
)


class TestTestResult:
    def test_two_sided_from_tails(self):
        r = Result.from_tails(1.0, 0.2, 0.8, 5, "x")
        assert r.p_two_sided == pytest.approx(0.4)
        assert r.p_value == r.p_two_sided

    def test_upper_tail(self):
        r = Result.from_tails(1.0, 0.9, 0.1, 5, "x", tail="upper")
        assert r.p_value == 0.1

    def test_clamped(self):
        r = Result.from_tails(1.0, -1e-17, 1.2, 5, "x")
        assert r.p_lower == 0.0 and r.p_upper == 1.0

    def test_unknown_tail(self):
        with pytest.raises(ValueError):
            Result.from_tails(1.0, 0.5, 0.5, 1, "x", tail="lower")

    def test_to_dict_keys(self):
        d = Result.from_tails(1.0, 0.5, 0.5, 1, "x").to_dict()
        assert set(d) == {"method", "statistic", "n", "tail", "p_value", "p_lower", "p_upper", "p_two_sided"}


class TestUTest:
    def test_symmetric_events(self):
        r = u_test(_series([0.1, 0.4, 0.6, 0.9]))
        assert r.statistic == pytest.approx(0.0, abs=1e-12)
        assert r.p_two_sided == pytest.approx(1.0)

    def test_reference_p_value(self):
        # three events whose sum S gives S - n/2 = -0.4781 sqrt(n/12)
        n = 3
        s = n / 2 - 0.4781 * math.sqrt(n / 12)
        r = u_test(_series([s / 3 - 0.1, s / 3, s / 3 + 0.1]))
        assert r.statistic == pytest.approx(-0.4781, abs=1e-12)
        assert r.p_two_sided == pytest.approx(0.6326, abs=5e-4)

    def test_empty(self):
        with pytest.raises(InsufficientDataError):
            u_test(_series([]))

    @given(times_and_horizon)
    def test_scale_invariance(self, th):
        times, T = th
        a, b = u_test(_series(times)), u_test(_series(np.array(times) * T, T))
        assert a.statistic == pytest.approx(b.statistic, rel=1e-9, abs=1e-9)

    @given(times_and_horizon)
    def test_tails_sum_to_one(self, th):
        r = u_test(_series(th[0]))
        assert r.p_lower + r.p_upper == pytest.approx(1.0, abs=1e-12)

    def test_calibration(self):
        rng = np.random.default_rng(1)
        rej = np.mean([u_test(_uniform(rng, 257)).p_value < 0.05 for _ in range(2000)])
        assert abs(rej - 0.05) <= 0.02


class TestMHBTest:
    def test_single_event_chi_square_two(self):
        r = mhb_test(_series([math.exp(-2)]))
        assert r.statistic == pytest.approx(4.0)
        assert r.p_upper == pytest.approx(math.exp(-2), abs=1e-12)

    def test_reference_lower_tail(self):
        # 257 events with log-times spread symmetrically about the target mean
        n = 257
        c = -496.3036 / (2 * n)
        r = mhb_test(_series(np.exp(c + np.linspace(-0.01, 0.01, n))))
        assert r.statistic == pytest.approx(496.3036, rel=1e-10)
        assert r.p_lower == pytest.approx(0.2954, abs=2e-3)
        assert r.p_lower == pytest.approx(stats.chi2.cdf(496.3036, 514), abs=1e-10)

    def test_event_at_zero(self):
        with pytest.raises(DataError):
            mhb_test(_series([0.0, 0.5]))

    @given(times_and_horizon)
    def test_scale_invariance(self, th):
        times, T = th
        a, b = mhb_test(_series(times)), mhb_test(_series(np.array(times) * T, T))
        assert a.statistic == pytest.approx(b.statistic, rel=1e-9)

    def test_null_mean_is_2n(self):
        rng = np.random.default_rng(2)
        n = 257
        x = np.array([mhb_test(_uniform(rng, n)).statistic for _ in range(2000)])
        assert abs(x.mean() - 2 * n) < 3 * math.sqrt(4 * n / 2000)

    def test_calibration(self):
        rng = np.random.default_rng(3)
        rej = np.mean([mhb_test(_uniform(rng, 257)).p_value < 0.05 for _ in range(2000)])
        assert abs(rej - 0.05) <= 0.02


class TestKSTest:
    @pytest.mark.parametrize("n", [1, 5, 100])
    def test_perfect_spacing(self, n):
        u = (np.arange(1, n + 1) - 0.5) / n
        assert ks_test(u).statistic == pytest.approx(1 / (2 * n))

    def test_reference_p_value(self):
        n, d = 257, 0.0633
        u = (np.arange(1, n + 1) - 0.5) / n
        u[n // 2:] = np.minimum(1.0, u[n // 2:] + d - 1 / (2 * n))
        r = ks_test(u)
        assert r.statistic == pytest.approx(d, abs=1e-12)
        assert r.p_upper == pytest.approx(0.246, abs=2e-3)

    def test_matches_scipy_statistic(self, rng):
        u = np.sort(rng.uniform(size=50))
        assert ks_test(u).statistic == pytest.approx(stats.kstest(u, "uniform").statistic, abs=1e-15)

    def test_unsorted(self):
        with pytest.raises(DataError):
            ks_test([0.5, 0.2])

    def test_out_of_range(self):
        with pytest.raises(DataError):
            ks_test([0.2, 1.5])

    def test_calibration(self):
        rng = np.random.default_rng(4)
        rej = np.mean([ks_test(np.sort(rng.uniform(size=257))).p_value < 0.05 for _ in range(2000)])
        assert abs(rej - 0.05) <= 0.02


class TestChangepointTest:
    def test_reference_constant(self):
        assert changepoint_pvalue(2.8949) == pytest.approx(0.1459, abs=1e-3)

    def test_clamped_for_small_z(self):
        assert changepoint_pvalue(0.5) == 1.0
        assert changepoint_pvalue(0.0) == 1.0
        assert changepoint_pvalue(1.5) == 1.0

    def test_monotone_in_z(self):
        # the raw approximation dips below zero for small z; the reported value must not
        p = np.array([changepoint_pvalue(z) for z in np.linspace(0.01, 6, 3000)])
        assert np.all(np.diff(p) <= 1e-15)

    def test_single_event_hand_values(self):
        assert _g(0, 0.5, 1) == pytest.approx(-1.0)
        assert _g(1, 0.5, 1) == pytest.approx(1.0)
        assert changepoint_test(_series([0.5])).statistic == pytest.approx(1.0)

    @given(st.integers(1, 50), st.integers(0, 50), st.floats(0.01, 0.99))
    def test_g_antisymmetry(self, n, i, u):
        i = min(i, n)
        assert _g(i, u, n) == pytest.approx(-_g(n - i, 1 - u, n), rel=1e-9, abs=1e-9)

    @given(times_and_horizon)
    def test_reversal_invariance(self, th):
        times, T = th
        t = np.array(times) * T
        a = changepoint_test(_series(t, T)).statistic
        b = changepoint_test(_series(T - t, T)).statistic
        assert a == pytest.approx(b, rel=1e-9)

    def test_needs_interior_event(self):
        with pytest.raises(InsufficientDataError):
            changepoint_test(_series([0.001, 0.995]))

    def test_calibration(self):
        rng = np.random.default_rng(5)
        rej = np.mean([changepoint_test(_uniform(rng, 133)).p_value < 0.05 for _ in range(2000)])
        assert 0.02 <= rej <= 0.09

    def test_detects_a_step(self, rng):
        r = StepRate([500.0], [0.4, 0.1], 1000.0)
        assert changepoint_test(simulate_direct(r, rng)).p_value < 0.01


class TestLogLinear:
    def test_half_gives_zero(self):
        assert loglinear_mle(_series([0.2, 0.8])) == 0.0

    @given(st.lists(st.floats(0.001, 0.999), min_size=2, max_size=40, unique=True), st.floats(1.0, 1e4))
    def test_root_residual(self, times, T):
        ev = _series(np.array(times) * T, T)
        beta = loglinear_mle(ev)
        target = np.mean(ev.times / T)
        assert _mean_ratio(beta * T) == pytest.approx(target, abs=1e-10)

    def test_mean_ratio_series_matches_direct(self):
        for x in (-2e-3, -1e-3 + 1e-9, 1e-3 - 1e-9, 2e-3):
            direct = 1 / x - 1 / math.expm1(x)
            assert _mean_ratio(x) == pytest.approx(direct, rel=1e-12)

    def test_synthetic_recovery(self):
        rng = np.random.default_rng(6)
        ev = _loglinear_events(rng, 0.0003, 6206.0, 600)
        assert loglinear_mle(ev) == pytest.approx(0.0003, abs=1e-4)

    def test_needs_two_events(self):
        with pytest.raises(InsufficientDataError):
            loglinear_mle(_series([0.3]))

    def test_rescale_beta_zero(self):
        ev = _series([1.0, 2.0, 5.0], 10.0)
        assert np.array_equal(loglinear_rescale(ev, 0.0), ev.times / 10.0)

    def test_rescale_endpoint(self):
        ev = _series([3.0, 10.0], 10.0)
        assert loglinear_rescale(ev, 10 / 10.0)[-1] == 1.0

    def test_rescaled_fit_passes_ks(self):
        rng = np.random.default_rng(7)
        passes = 0
        for _ in range(100):
            ev = _loglinear_events(rng, 0.0003, 6206.0, 600)
            passes += ks_test(loglinear_rescale(ev, loglinear_mle(ev))).p_value > 0.01
        assert passes >= 95


class TestBayesFactors:
    def test_b01_closed_form_two_events(self):
        # integrand y / (e^y - 1) integrates to pi^2 / 6
        r = bayes_factor_01(_series([0.25, 0.75]))
        assert r.B == pytest.approx(0.6449 * 6 / math.pi**2, rel=1e-9)
        assert r.B == pytest.approx(0.392052, abs=1e-6)

    def test_b01_independent_quadrature(self, rng):
        for n in (2, 5, 20):
            ev = _uniform(rng, n)
            S = float(ev.times.sum())
            f = lambda y: math.exp(-S * y) * (y / -math.expm1(-y)) ** (n - 1) if y > 0 else 1.0  # noqa: E731
            val, _ = integrate.quad(f, 0, np.inf, epsabs=0, epsrel=1e-12, limit=200)
            assert bayes_factor_01(ev).B == pytest.approx(0.6449 * (n - 1) / val, rel=1e-8)

    def test_b01_tolerance_halving(self, rng):
        ev = _uniform(rng, 300)
        a = bayes_factor_01(ev, 1e-8).log_B
        b = bayes_factor_01(ev, 5e-9).log_B
        assert abs(a - b) < 1e-6

    def test_b02_single_central_event(self):
        assert bayes_factor_02(_series([0.5])).B == pytest.approx(1.0, abs=1e-6)

    @pytest.mark.parametrize("n", [1, 2, 3, 6])
    def test_b02_closed_form(self, rng, n):
        ev = _uniform(rng, n)
        assert bayes_factor_02(ev).B == pytest.approx(_b02_closed_form(ev.times), rel=1e-8)

    def test_b02_tolerance_halving(self, rng):
        ev = _uniform(rng, 300)
        assert abs(bayes_factor_02(ev, 1e-8).log_B - bayes_factor_02(ev, 5e-9).log_B) < 1e-6

    def test_b02_large_n_finite(self, rng):
        r = bayes_factor_02(_uniform(rng, 1500))
        assert math.isfinite(r.log_B)

    def test_b12_identity(self, rng):
        ev = _uniform(rng, 40)
        b12 = bayes_factor_12(ev).log_B
        assert b12 == pytest.approx(bayes_factor_02(ev).log_B - bayes_factor_01(ev).log_B, abs=1e-12)

    def test_b12_one_when_equal(self):
        r = BayesFactorResult(0.3 - 0.3, 0.0)
        assert r.B == 1.0

    def test_homogeneous_favours_m0(self):
        rng = np.random.default_rng(8)
        vals = [bayes_factor_01(_uniform(rng, 100)).two_log_B for _ in range(200)]
        assert np.median(vals) > 0

    def test_changepoint_data_against_m0(self):
        rng = np.random.default_rng(9)
        rate = StepRate([1000.0], [0.1, 0.03], 3000.0)  # about 170 events
        b02, b21 = [], []
        for _ in range(100):
            ev = simulate_direct(rate, rng)
            b02.append(bayes_factor_02(ev).two_log_B)
            b21.append(-bayes_factor_12(ev).two_log_B)
        assert np.median(b02) < 0
        assert np.sum(np.array(b21) > 5) >= 80

    def test_inverse(self):
        r = BayesFactorResult(1.5, 1e-9).inverse()
        assert r.log_B == -1.5 and r.quadrature_error == 1e-9

    def test_result_dict(self):
        d = BayesFactorResult(math.log(4.0), 0.0).to_dict()
        assert d["B"] == pytest.approx(4.0)
        assert d["two_log_B"] == pytest.approx(2 * math.log(4.0))
        assert d["evidence"] == "Positive"


class TestCalibrate:
    @pytest.mark.parametrize(
        "value,label",
        [
            (7.0167, "Strong"),
            (0.0, "Barely worth mentioning"),
            (-3.0, "Negative"),
            (2.0, "Positive"),
            (5.0, "Strong"),
            (10.0, "Very strong"),
            (math.inf, "Very strong"),
            (-math.inf, "Negative"),
        ],
    )
    def test_buckets(self, value, label):
        assert calibrate(value) == label


class TestSegments:
    def test_midday_split(self):
        ev = _series([1.0, 2.0, 5.0, 6.0, 10.0], 10.0)
        (a0, b0, s0), (a1, b1, s1) = split_segments(ev, [4.6])
        assert (a0, b0, a1, b1) == (0.0, 5.0, 5.0, 10.0)
        assert s0.times.tolist() == [0.5, 1.5, 4.5]
        assert s1.times.tolist() == [0.5, 4.5]
        assert s0.horizon == 5.0 and s1.horizon == 5.0

    def test_raw_split_closes_last_interval(self):
        ev = _series([1.0, 5.0, 10.0], 10.0)
        (_, _, s0), (_, _, s1) = split_segments(ev, [5.0], midday=False)
        assert s0.times.tolist() == [1.0]
        assert s1.times.tolist() == [5.0]  # the event at 5.0 sits at offset 0 and is dropped

    def test_report_schema(self, rng):
        ev = simulate_direct(StepRate([500.0], [0.3, 0.1], 1000.0), rng)
        rep = segment_report(ev, [500.0])
        assert len(rep) == 2
        for block in rep:
            assert set(block["tests"]) == {"U", "MHB", "KS", "changepoint"}
            assert set(block["bayes_factors"]) == {"B01", "B02", "B12"}
            assert {"beta", "U", "MHB", "KS"} <= set(block["loglinear"])
            assert 0 <= block["tests"]["KS"]["p_value"] <= 1
            assert block["bayes_factors"]["B02"]["evidence"] in {
                "Negative", "Barely worth mentioning", "Positive", "Strong", "Very strong"
            }

    def test_report_skips_sparse_segment(self):
        ev = _series([1.0, 8.0, 9.0, 9.5], 10.0)
        first, second = segment_report(ev, [5.0])
        assert "skipped" in first and first["n"] == 1
        assert "tests" in second

    def test_no_changepoints_single_segment(self, rng):
        rep = segment_report(_uniform(rng, 30, 100.0), [])
        assert len(rep) == 1 and rep[0]["stop"] == 100.0
