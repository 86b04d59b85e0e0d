"""Run configuration: defaults, JSON loading, dotted overrides and hashing."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

from ._exceptions import ConfigurationError
from .rjmcmc import ChainConfig, PriorConfig
from .validation import PipelineSettings

__all__ = ["RunConfig", "load_config", "apply_overrides"]


@dataclass
class PriorSection:
    mu: float = 4.5
    k_max: int = 20
    gamma: float | None = None


@dataclass
class ChainSection:
    burn_in: int = 20_000
    n_updates: int = 500_000
    thin: int = 40
    seed: int | None = None


@dataclass
class BandwidthSection:
    location: float = 95.0
    height: float = 0.003


@dataclass
class ReplicationSection:
    n_rep: int = 1000
    conditional: bool = True


@dataclass
class PipelineSection:
    max_iter: int = 5
    alpha: float = 0.05
    stability_days: float = 30.0
    max_m0: int = 10


@dataclass
class RunConfig:
    input: str | None = None
    start_date: str | None = None
    quantile: float = 0.9
    m0: int = 1
    half_window: int = 65
    include_trend: bool = False
    prior: PriorSection = field(default_factory=PriorSection)
    chain: ChainSection = field(default_factory=ChainSection)
    bandwidths: BandwidthSection = field(default_factory=BandwidthSection)
    replication: ReplicationSection = field(default_factory=ReplicationSection)
    pipeline: PipelineSection = field(default_factory=PipelineSection)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        return _build(cls, data, "")

    def sha256(self) -> str:
        """Hash of the canonical JSON form; the seed is excluded and reported separately."""
        d = self.to_dict()
        d["chain"] = {k: v for k, v in d["chain"].items() if k != "seed"}
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def prior_config(self) -> PriorConfig:
        return PriorConfig(self.prior.mu, self.prior.k_max, self.prior.gamma)

    def chain_config(self) -> ChainConfig:
        c = self.chain
        return ChainConfig(c.burn_in, c.n_updates, c.thin, c.seed)

    def pipeline_settings(self) -> PipelineSettings:
        p = self.pipeline
        return PipelineSettings(
            quantile=self.quantile,
            m0=self.m0,
            half_window=self.half_window,
            include_trend=self.include_trend,
            prior=self.prior_config(),
            chain=self.chain_config(),
            location_bandwidth=self.bandwidths.location,
            height_bandwidth=self.bandwidths.height,
            n_rep=self.replication.n_rep,
            conditional=self.replication.conditional,
            max_iter=p.max_iter,
            alpha=p.alpha,
            stability_days=p.stability_days,
            max_m0=p.max_m0,
        )


def _build(cls, data, prefix):
    if not isinstance(data, dict):
        raise ConfigurationError(f"section '{prefix or 'root'}' must be an object")
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigurationError(f"unknown configuration key(s): {', '.join(prefix + k for k in sorted(unknown))}")
    defaults = cls()
    kwargs = {}
    for name, value in data.items():
        current = getattr(defaults, name)
        if is_dataclass(current):
            kwargs[name] = _build(type(current), value, f"{prefix}{name}.")
        else:
            kwargs[name] = _coerce(current, value, prefix + name)
    return cls(**kwargs)


def _coerce(default, value, key):
    if value is None or default is None:
        return value
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
        raise ConfigurationError(f"{key} must be true or false")
    if isinstance(default, int) and not isinstance(value, bool) and isinstance(value, (int, float)) and float(value).is_integer():
        return int(value)
    if isinstance(default, float) and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if isinstance(default, str) and isinstance(value, str):
        return value
    raise ConfigurationError(f"{key} has the wrong type: {value!r}")


def apply_overrides(data: dict, overrides) -> dict:
    """Apply ``key.sub=value`` strings; values are parsed as JSON, falling back to plain strings."""
    out = copy.deepcopy(data)
    for item in overrides or ():
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigurationError(f"override must look like key=value, got {item!r}")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = out
        parts = key.strip().split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigurationError(f"cannot override inside non-section key {key!r}")
        node[parts[-1]] = value
    return out


def load_config(path=None, overrides=None, seed: int | None = None) -> RunConfig:
    """Defaults, then the JSON file at ``path``, then ``overrides``, then ``seed``."""
    data: dict = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from exc
    data = apply_overrides(data, overrides)
    if seed is not None:
        data.setdefault("chain", {})["seed"] = seed
    cfg = RunConfig.from_dict(data)
    # validate early so a bad value fails before any work is done
    cfg.prior_config()
    cfg.chain_config()
    return cfg
