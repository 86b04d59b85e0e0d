"""Plain-text file formats: daily CSV input, exceedance lists, ensembles and tables.

Every writer prefixes its output with ``# provenance config_sha256=<hash> seed=<seed>``.
Readers skip ``#`` lines other than the ``key=value`` metadata they understand.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
from pathlib import Path

import numpy as np

from ._exceptions import DataError
from .events import ExceedanceSeries
from .posterior import PosteriorEnsemble
from .preprocess import DailySeries

__all__ = [
    "provenance_line",
    "read_daily_csv",
    "write_exceedances",
    "read_exceedances",
    "write_ensemble",
    "read_ensemble",
    "write_table",
    "write_json",
]


def provenance_line(config_hash: str, seed) -> str:
    return f"# provenance config_sha256={config_hash} seed={seed}\n"


def _comment_meta(lines) -> dict:
    meta = {}
    for line in lines:
        if line.startswith("#"):
            for part in line[1:].split():
                key, sep, val = part.partition("=")
                if sep:
                    meta[key] = val
    return meta


def read_daily_csv(path) -> DailySeries:
    """Read ``date,value`` rows; an empty value marks a missing day.

    Dates must increase; skipped calendar days are filled in as missing.
    An optional header row is recognised by a non-date first field.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    dates, values = [], []
    for lineno, row in enumerate(csv.reader(text.splitlines()), start=1):
        if not row or row[0].lstrip().startswith("#"):
            continue
        if len(row) < 2:
            raise DataError(f"{path}:{lineno}: expected 'date,value', got {','.join(row)!r}")
        field0, field1 = row[0].strip(), row[1].strip()
        try:
            day = dt.date.fromisoformat(field0)
        except ValueError:
            if not dates and not field0[:1].isdigit():
                continue  # header
            raise DataError(f"{path}:{lineno}: unparseable date {field0!r}") from None
        if field1 == "" or field1.lower() in ("na", "nan"):
            value = np.nan
        else:
            try:
                value = float(field1)
            except ValueError:
                raise DataError(f"{path}:{lineno}: unparseable value {field1!r}") from None
            if not (np.isfinite(value) and value > 0):
                raise DataError(f"{path}:{lineno}: value must be positive, got {field1!r}")
        if dates and day <= dates[-1]:
            raise DataError(f"{path}:{lineno}: date {day} does not follow {dates[-1]}")
        dates.append(day)
        values.append(value)
    if not dates:
        raise DataError(f"{path}: no data rows")
    offsets = np.array([(d - dates[0]).days for d in dates])
    full = np.full(offsets[-1] + 1, np.nan)
    full[offsets] = values
    return DailySeries.from_values(full, dates[0])


def write_exceedances(path, events: ExceedanceSeries, provenance: str, start_date: dt.date | None = None) -> None:
    lines = [provenance, f"# horizon={events.horizon!r}\n"]
    if start_date is not None:
        lines.append(f"# start_date={start_date.isoformat()}\n")
    lines.append("t\n")
    lines.extend(f"{t!r}\n" for t in events.times.tolist())
    Path(path).write_text("".join(lines))


def read_exceedances(path):
    """Return ``(events, start_date_or_None)``."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    meta = _comment_meta(lines)
    if "horizon" not in meta:
        raise DataError(f"{path}: missing '# horizon=' header")
    times = []
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#") or line.lower() in ("t", "t,", "time"):
            continue
        try:
            times.append(float(line.split(",")[0]))
        except ValueError:
            raise DataError(f"{path}:{lineno}: unparseable event time {line!r}") from None
    start = dt.date.fromisoformat(meta["start_date"]) if "start_date" in meta else None
    try:
        horizon = float(meta["horizon"])
    except ValueError:
        raise DataError(f"{path}: bad horizon {meta['horizon']!r}") from None
    return ExceedanceSeries(np.array(times, dtype=float), horizon), start


# timings vary run to run and would break byte-identical reruns
_VOLATILE = {"seconds"}


def _flatten(d, prefix=""):
    for key in sorted(d):
        val = d[key]
        if isinstance(val, dict):
            yield from _flatten(val, f"{prefix}{key}.")
        elif key not in _VOLATILE:
            yield f"{prefix}{key}", val


def write_ensemble(path, ens: PosteriorEnsemble, provenance: str, start_date: dt.date | None = None) -> None:
    """One row per sample: ``k, s_1..s_k, h_0..h_k`` with full float precision."""
    lines = [provenance, f"# horizon={ens.horizon!r}\n"]
    if start_date is not None:
        lines.append(f"# start_date={start_date.isoformat()}\n")
    for key, val in _flatten(ens.diagnostics):
        lines.append(f"# diagnostics.{key}={val!r}\n")
    lines.append("# columns: k, s_1..s_k, h_0..h_k\n")
    for s, h in zip(ens.changepoints, ens.heights):
        lines.append(",".join([str(len(s)), *map(repr, s), *map(repr, h)]) + "\n")
    Path(path).write_text("".join(lines))


def read_ensemble(path):
    """Return ``(ensemble, start_date_or_None)``; diagnostics are not restored."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    meta = _comment_meta(lines)
    if "horizon" not in meta:
        raise DataError(f"{path}: missing '# horizon=' header")
    cps, hts = [], []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip() or line.startswith("#"):
            continue
        try:
            parts = [float(x) for x in line.split(",")]
            k = int(parts[0])
        except ValueError:
            raise DataError(f"{path}:{lineno}: unparseable ensemble row") from None
        if len(parts) != 2 * k + 2:
            raise DataError(f"{path}:{lineno}: expected {2 * k + 2} fields for k={k}, got {len(parts)}")
        cps.append(parts[1:k + 1])
        hts.append(parts[k + 1:])
    if not hts:
        raise DataError(f"{path}: no ensemble rows")
    start = dt.date.fromisoformat(meta["start_date"]) if "start_date" in meta else None
    return PosteriorEnsemble(cps, hts, float(meta["horizon"])), start


def write_table(path, header, rows, provenance: str) -> None:
    """CSV with a provenance comment line then a header row."""
    with open(path, "w", newline="") as fh:
        fh.write(provenance)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in np.asarray(rows).tolist():
            w.writerow([repr(x) if isinstance(x, float) else x for x in row])


def write_json(path, payload: dict, config_hash: str, seed) -> None:
    body = {"provenance": {"config_sha256": config_hash, "seed": seed}, **payload}
    Path(path).write_text(json.dumps(body, indent=2, sort_keys=False, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (dt.date,)):
        return obj.isoformat()
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")
