"""Posterior-predictive replication and the iterative decluster/estimate workflow."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ._exceptions import DataError
from ._validation import check_random_state
from .events import ExceedanceSeries, StepRate, simulate_conditional, simulate_direct
from .posterior import (
    HEIGHT_BANDWIDTH,
    LOCATION_BANDWIDTH,
    PosteriorEnsemble,
    k_distribution,
    point_estimate,
)
from .preprocess import (
    DailySeries,
    decluster,
    deseasonalise,
    fit_seasonal,
    impute_missing,
    runs_test,
    threshold_exceedances,
)
from .rjmcmc import ChainConfig, PriorConfig, run_chain

logger = logging.getLogger(__name__)

__all__ = [
    "ReplicationEnsemble",
    "replicate_predictive",
    "observed_path",
    "PipelineSettings",
    "iterate_pipeline",
    "segment_runs_tests",
    "runs_summary",
]


def _counts(times: np.ndarray, grid: np.ndarray, horizon: float, reverse: bool) -> np.ndarray:
    if reverse:
        return times.size - np.searchsorted(times, horizon - grid, side="left")
    return np.searchsorted(times, grid, side="right")


def observed_path(events: ExceedanceSeries, grid, reverse: bool = False) -> np.ndarray:
    """Cumulative counts of ``events`` on ``grid`` (counted backwards from ``T`` when ``reverse``)."""
    return _counts(events.times, np.asarray(grid, dtype=float), events.horizon, reverse)


@dataclass
class ReplicationEnsemble:
    grid: np.ndarray
    paths: np.ndarray
    conditional: bool
    level: float = 0.9
    reverse: bool = False
    lo: np.ndarray = field(init=False)
    hi: np.ndarray = field(init=False)
    pointwise_mean: np.ndarray = field(init=False)

    def __post_init__(self):
        tail = (1 - self.level) / 2
        self.lo, self.hi = np.quantile(self.paths, [tail, 1 - tail], axis=0)
        self.pointwise_mean = self.paths.mean(axis=0)

    @property
    def endpoints(self) -> np.ndarray:
        return self.paths[:, -1]

    def envelope(self, level: float):
        tail = (1 - level) / 2
        return np.quantile(self.paths, [tail, 1 - tail], axis=0)

    def coverage(self, observed) -> float:
        """Fraction of grid points where ``observed`` lies inside the envelope."""
        obs = np.asarray(observed)
        return float(np.mean((obs >= self.lo) & (obs <= self.hi)))

    def table(self, observed=None) -> np.ndarray:
        obs = np.full(self.grid.shape, np.nan) if observed is None else np.asarray(observed, dtype=float)
        return np.column_stack([self.grid, self.pointwise_mean, self.lo, self.hi, obs])


def replicate_predictive(
    ens: PosteriorEnsemble,
    n_rep: int = 1000,
    conditional: bool = False,
    n_obs: int | None = None,
    grid=None,
    rng=None,
    level: float = 0.9,
    reverse: bool = False,
) -> ReplicationEnsemble:
    """Simulate counting paths, each from a rate drawn uniformly from the ensemble.

    Conditional replicates have exactly ``n_obs`` events.
    """
    if n_rep < 1:
        raise DataError("n_rep must be at least 1")
    if conditional and n_obs is None:
        raise DataError("conditional replication needs n_obs")
    if len(ens) == 0:
        raise DataError("empty ensemble")
    rng = check_random_state(rng)
    T = ens.horizon
    grid = np.arange(0.0, np.floor(T) + 1) if grid is None else np.asarray(grid, dtype=float)
    picks = rng.integers(len(ens), size=n_rep)
    streams = rng.spawn(n_rep)
    paths = np.empty((n_rep, grid.size), dtype=np.int64)
    for r, (i, sub) in enumerate(zip(picks, streams)):
        rate = StepRate(ens.changepoints[i], ens.heights[i], T)
        ev = simulate_conditional(rate, n_obs, sub) if conditional else simulate_direct(rate, sub)
        paths[r] = _counts(ev.times, grid, T, reverse)
    return ReplicationEnsemble(grid, paths, conditional, level, reverse)


@dataclass
class PipelineSettings:
    quantile: float = 0.9
    m0: int = 1
    half_window: int = 65
    include_trend: bool = False
    prior: PriorConfig = field(default_factory=PriorConfig)
    chain: ChainConfig = field(default_factory=ChainConfig)
    location_bandwidth: float = LOCATION_BANDWIDTH
    height_bandwidth: float = HEIGHT_BANDWIDTH
    n_rep: int = 1000
    conditional: bool = True
    max_iter: int = 5
    alpha: float = 0.05
    stability_days: float = 30.0
    max_m0: int = 10


def segment_runs_tests(binary, changepoints, horizon: float) -> list[dict]:
    """Runs test on the symbols of each inter-change-point segment ``[s_j, s_{j+1})``."""
    bounds = [0.0, *map(float, changepoints), float(horizon) + 1]
    out = []
    for a, b in zip(bounds[:-1], bounds[1:]):
        sub = binary.window(a, b)
        block = {"start": a, "stop": min(b, float(horizon)), "n": sub.n, "n_plus": sub.n_plus}
        block.update(runs_summary(sub))
        out.append(block)
    return out


def runs_summary(binary) -> dict:
    try:
        return runs_test(binary).to_dict()
    except DataError as exc:
        return {"skipped": str(exc)}


def _rejects(blocks, alpha) -> bool:
    return any(b.get("p_value", 1.0) < alpha for b in blocks)


def _estimate_summary(ens, rate, n_events) -> dict:
    pmf = k_distribution(ens)
    return {
        "n_events": n_events,
        "k_distribution": {str(k): v for k, v in pmf.items()},
        "k_hat": rate.k,
        "changepoints": rate.changepoints.tolist(),
        "heights": rate.heights.tolist(),
        "acceptance_rate": ens.diagnostics.get("acceptance_rate"),
    }


def _fit(events, s: PipelineSettings, rng):
    ens = run_chain(events, s.prior, s.chain, rng)
    rate = point_estimate(ens, s.location_bandwidth, s.height_bandwidth)
    return ens, rate, _estimate_summary(ens, rate, events.n)


def _stable(old, new, tol) -> bool:
    return old.k == new.k and bool(np.all(np.abs(old.changepoints - new.changepoints) < tol))


def iterate_pipeline(series: DailySeries, settings: PipelineSettings | None = None, rng=None) -> dict:
    """Run the full decluster/estimate loop and return a report with one block per stage.

    Stages: (i) MCMC on raw exceedances; (ii) per-segment runs tests on the
    raw symbols; (iii) decluster and re-test per segment, raising ``m0`` while
    any segment rejects; (iv) MCMC on the declustered events; (v) repeat
    (iii)-(iv) until ``k`` and every change-point are stable; (vi)
    posterior-predictive replication of the final fit. Hitting ``max_iter``
    is reported as non-convergence, not raised.
    """
    s = settings or PipelineSettings()
    rng = check_random_state(rng)
    report: dict = {}

    imputed = impute_missing(series, s.half_window, rng)
    fit = fit_seasonal(imputed, s.include_trend)
    des = deseasonalise(imputed, fit)
    thr, raw_events, binary = threshold_exceedances(des, s.quantile)
    T = raw_events.horizon
    report["preprocess"] = {
        "length": len(series),
        "missing_fraction": float(series.missing.mean()),
        "seasonal_fit": {"a": fit.a, "b": fit.b, "c": fit.c, "beta": fit.beta, "omega": fit.omega},
        "threshold": thr,
        "n_exceedances": raw_events.n,
    }
    if raw_events.n == 0:
        raise DataError("no threshold exceedances; nothing to fit")

    _, current, summary = _fit(raw_events, s, rng)
    report["i_raw_mcmc"] = summary
    raw_tests = segment_runs_tests(binary, current.changepoints, T)
    report["ii_raw_runs_tests"] = {
        "whole_series": runs_summary(binary),
        "segments": raw_tests,
        "rejects": _rejects(raw_tests, s.alpha),
    }

    iterations = []
    m0 = s.m0
    converged = False
    final_ens, final_events = None, None
    for it in range(1, s.max_iter + 1):
        dc = decluster(binary, des.values, m0)
        seg_tests = segment_runs_tests(dc.relabelled, current.changepoints, T)
        record = {
            "iteration": it,
            "m0": m0,
            "n_clusters": dc.n_clusters,
            "iii_declustered_runs_tests": seg_tests,
            "all_accept": not _rejects(seg_tests, s.alpha),
        }
        record["whole_series_declustered"] = runs_summary(dc.relabelled)
        if not record["all_accept"]:
            iterations.append(record)
            if m0 >= s.max_m0:
                break
            m0 += 1
            continue
        ens, new, summary = _fit(dc.events, s, rng)
        record["iv_declustered_mcmc"] = summary
        record["stable"] = _stable(current, new, s.stability_days)
        iterations.append(record)
        final_ens, final_events = ens, dc.events
        current = new
        if record["stable"]:
            converged = True
            break
    report["iii_v_iterations"] = iterations
    report["converged"] = converged
    report["final"] = {
        "m0": m0,
        "k_hat": current.k,
        "changepoints": current.changepoints.tolist(),
        "heights": current.heights.tolist(),
        "changepoint_dates": [series.date_of(c).isoformat() for c in current.changepoints],
    }
    if final_ens is None:
        report["vi_replication"] = {"skipped": "no declustered fit was accepted"}
        return report
    rep = replicate_predictive(final_ens, s.n_rep, s.conditional, final_events.n, None, rng)
    obs = observed_path(final_events, rep.grid)
    report["vi_replication"] = {
        "n_rep": s.n_rep,
        "conditional": s.conditional,
        "coverage_90": rep.coverage(obs),
        "mean_endpoint": float(rep.endpoints.mean()),
        "observed_endpoint": int(final_events.n),
    }
    report["_replication"] = rep
    report["_observed"] = obs
    report["_events"] = final_events
    report["_ensemble"] = final_ens
    return report
