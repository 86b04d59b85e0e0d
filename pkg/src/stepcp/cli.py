"""``stepcp`` command line: preprocess, fit, test, validate and pipeline subcommands.

Exit status is 0 on success, 2 on data or configuration errors and 3 on
numerical failures.
"""

from __future__ import annotations

import argparse
import datetime as dt
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from ._exceptions import ConfigurationError, DataError, NumericalError
from ._validation import check_random_state
from .config import RunConfig, load_config
from .posterior import (
    height_summaries,
    k_distribution,
    location_summaries,
    mode_k,
    point_estimate,
)
from .preprocess import (
    decluster,
    deseasonalise,
    fit_seasonal,
    impute_missing,
    threshold_exceedances,
)
from .model_select import segment_report
from .rjmcmc import run_chain
from .validation import runs_summary, iterate_pipeline, observed_path, replicate_predictive

logger = logging.getLogger("stepcp")

EXIT_OK, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3


class _Run:
    """Resolved configuration plus output helpers shared by the subcommands."""

    def __init__(self, args):
        self.cfg: RunConfig = load_config(args.config, args.set, args.seed)
        self.seed = self.cfg.chain.seed
        self.hash = self.cfg.sha256()
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.prov = io.provenance_line(self.hash, self.seed)
        self.rng = check_random_state(self.seed)

    def json(self, name, payload):
        io.write_json(self.out / name, payload, self.hash, self.seed)

    def path(self, name) -> Path:
        return self.out / name


def _date(start, day):
    if start is None:
        return None
    return (start + dt.timedelta(days=int(round(day)) - 1)).isoformat()


def cmd_preprocess(args) -> int:
    run = _Run(args)
    cfg = run.cfg
    if args.input or cfg.input:
        series = io.read_daily_csv(args.input or cfg.input)
    else:
        raise ConfigurationError("preprocess needs an input CSV (--input or config 'input')")
    imputed = impute_missing(series, cfg.half_window, run.rng)
    fit = fit_seasonal(imputed, cfg.include_trend)
    des = deseasonalise(imputed, fit)
    thr, raw, binary = threshold_exceedances(des, cfg.quantile)
    dc = decluster(binary, des.values, cfg.m0)
    io.write_exceedances(run.path("raw_exceedances.csv"), raw, run.prov, series.start_date)
    io.write_exceedances(run.path("exceedances.csv"), dc.events, run.prov, series.start_date)
    run.path("seasonal_fit.txt").write_text(run.prov + fit.to_text())
    run.json("preprocess_report.json", {
        "start_date": series.start_date.isoformat(),
        "length": len(series),
        "missing_fraction": float(series.missing.mean()),
        "threshold": thr,
        "quantile": cfg.quantile,
        "n_exceedances": raw.n,
        "m0": cfg.m0,
        "n_clusters": dc.n_clusters,
        "runs_test": {"raw": runs_summary(binary), "declustered": runs_summary(dc.relabelled)},
    })
    print(f"{raw.n} exceedances, {dc.n_clusters} clusters -> {run.out}")
    return EXIT_OK


def summarise_fit(ens, cfg: RunConfig, start=None) -> dict:
    """k pmf plus location and height summaries at the modal k, with calendar dates."""
    pmf = k_distribution(ens)
    k_hat = mode_k(pmf)
    rate = point_estimate(ens, cfg.bandwidths.location, cfg.bandwidths.height)
    locations = []
    if k_hat:
        for j, d in enumerate(location_summaries(ens, k_hat, cfg.bandwidths.location), start=1):
            row = {"index": j, **d.to_dict()}
            for key in ("mode", "q25", "median", "q75"):
                row[f"{key}_date"] = _date(start, d.to_dict()[key])
            locations.append(row)
    heights = [{"index": j, **d.to_dict()} for j, d in enumerate(height_summaries(ens, k_hat, cfg.bandwidths.height))]
    return {
        "n_samples": len(ens),
        "k_distribution": {str(k): p for k, p in pmf.items()},
        "k_hat": k_hat,
        "locations": locations,
        "heights": heights,
        "point_estimate": {
            "changepoints": rate.changepoints.tolist(),
            "changepoint_dates": [_date(start, s) for s in rate.changepoints],
            "heights": rate.heights.tolist(),
        },
        "diagnostics": {k: v for k, v in ens.diagnostics.items() if k != "seconds"},
    }


def _densities(run, ens, cfg, k_hat):
    if k_hat:
        for j, d in enumerate(location_summaries(ens, k_hat, cfg.bandwidths.location), start=1):
            io.write_table(run.path(f"location_{j}.csv"), ["s", "density"], np.column_stack([d.grid, d.density]), run.prov)
    for j, d in enumerate(height_summaries(ens, k_hat, cfg.bandwidths.height)):
        io.write_table(run.path(f"height_{j}.csv"), ["h", "density"], np.column_stack([d.grid, d.density]), run.prov)


def cmd_fit(args) -> int:
    run = _Run(args)
    events, start = io.read_exceedances(args.events)
    if events.n == 0:
        raise DataError("exceedance file has no events; gamma = T/N is undefined")
    ens = run_chain(events, run.cfg.prior_config(), run.cfg.chain_config(), run.rng)
    io.write_ensemble(run.path("ensemble.csv"), ens, run.prov, start)
    summary = summarise_fit(ens, run.cfg, start)
    _densities(run, ens, run.cfg, summary["k_hat"])
    run.json("posterior_summary.json", summary)
    print(f"k_hat={summary['k_hat']} from {len(ens)} samples -> {run.out}")
    return EXIT_OK


def _changepoints(args):
    if args.changepoints is not None:
        try:
            return [float(x) for x in args.changepoints.split(",") if x.strip()]
        except ValueError:
            raise DataError(f"bad --changepoints list {args.changepoints!r}") from None
    if args.ensemble is not None:
        ens, _ = io.read_ensemble(args.ensemble)
        return point_estimate(ens).changepoints.tolist()
    return []


def cmd_test(args) -> int:
    run = _Run(args)
    events, start = io.read_exceedances(args.events)
    cps = _changepoints(args)
    segments = segment_report(events, cps)
    for seg in segments:
        seg["start_date"] = _date(start, seg["start"] + 1)
        seg["stop_date"] = _date(start, seg["stop"])
    run.json("segment_report.json", {"changepoints": cps, "segments": segments})
    print(f"{len(segments)} segment(s) tested -> {run.out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    run = _Run(args)
    ens, start = io.read_ensemble(args.ensemble)
    events, _ = io.read_exceedances(args.events)
    if abs(events.horizon - ens.horizon) > 1e-9:
        raise DataError("ensemble and exceedance file have different horizons")
    rc = run.cfg.replication
    rep = replicate_predictive(ens, rc.n_rep, rc.conditional, events.n, None, run.rng)
    obs = observed_path(events, rep.grid)
    io.write_table(run.path("replication.csv"), ["grid", "mean", "lo", "hi", "observed"], rep.table(obs), run.prov)
    run.json("validation_report.json", {
        "n_rep": rc.n_rep,
        "conditional": rc.conditional,
        "envelope_level": rep.level,
        "coverage": rep.coverage(obs),
        "observed_endpoint": events.n,
        "mean_endpoint": float(rep.endpoints.mean()),
        "endpoint_quantiles": dict(zip(("q05", "q50", "q95"), np.quantile(rep.endpoints, [0.05, 0.5, 0.95]).tolist())),
    })
    print(f"coverage {rep.coverage(obs):.3f} over {rc.n_rep} replicates -> {run.out}")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    run = _Run(args)
    path = args.input or run.cfg.input
    if not path:
        raise ConfigurationError("pipeline needs an input CSV (--input or config 'input')")
    series = io.read_daily_csv(path)
    report = iterate_pipeline(series, run.cfg.pipeline_settings(), run.rng)
    rep = report.pop("_replication", None)
    obs = report.pop("_observed", None)
    events = report.pop("_events", None)
    ens = report.pop("_ensemble", None)
    if rep is not None:
        io.write_table(run.path("replication.csv"), ["grid", "mean", "lo", "hi", "observed"], rep.table(obs), run.prov)
        io.write_ensemble(run.path("ensemble.csv"), ens, run.prov, series.start_date)
        io.write_exceedances(run.path("exceedances.csv"), events, run.prov, series.start_date)
    run.json("pipeline_report.json", report)
    status = "converged" if report["converged"] else "did not converge"
    print(f"pipeline {status}; k_hat={report['final']['k_hat']} -> {run.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--seed", type=int, help="random seed (overrides chain.seed)")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key, e.g. chain.thin=20")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="stepcp", description="Change-point analysis of threshold exceedances.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("preprocess", parents=[common], help="impute, deseasonalise, threshold and decluster a daily CSV")
    s.add_argument("--input", help="daily CSV (date,value)")
    s.set_defaults(func=cmd_preprocess)

    s = sub.add_parser("fit", parents=[common], help="run the RJMCMC sampler on an exceedance file")
    s.add_argument("--events", required=True, help="exceedance file")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("test", parents=[common], help="per-segment uniformity tests and Bayes factors")
    s.add_argument("--events", required=True, help="exceedance file")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--changepoints", help="comma-separated change-point days")
    g.add_argument("--ensemble", help="ensemble file; its point estimate supplies the change-points")
    s.set_defaults(func=cmd_test)

    s = sub.add_parser("validate", parents=[common], help="posterior-predictive replication")
    s.add_argument("--ensemble", required=True, help="ensemble file")
    s.add_argument("--events", required=True, help="exceedance file")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("pipeline", parents=[common], help="iterative decluster/estimate workflow")
    s.add_argument("--input", help="daily CSV (date,value)")
    s.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (DataError, ConfigurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, FloatingPointError, OverflowError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
