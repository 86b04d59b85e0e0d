"""Summaries of a thinned RJMCMC sample of step rates."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ._exceptions import DataError
from ._validation import check_random_state
from .events import StepRate

logger = logging.getLogger(__name__)

__all__ = [
    "PosteriorEnsemble",
    "DensityEstimate",
    "gaussian_kde",
    "k_distribution",
    "mode_k",
    "location_summaries",
    "height_summaries",
    "mean_rate",
    "point_estimate",
    "LOCATION_BANDWIDTH",
    "HEIGHT_BANDWIDTH",
]

LOCATION_BANDWIDTH = 95.0
HEIGHT_BANDWIDTH = 0.003
GRID_SIZE = 2048


@dataclass
class PosteriorEnsemble:
    """Thinned chain output: per-sample change-points and heights sharing one horizon."""

    changepoints: list
    heights: list
    horizon: float
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.changepoints) != len(self.heights):
            raise DataError("changepoints and heights must have one entry per sample")
        self.changepoints = [tuple(float(x) for x in s) for s in self.changepoints]
        self.heights = [tuple(float(x) for x in h) for h in self.heights]
        for s, h in zip(self.changepoints, self.heights):
            if len(h) != len(s) + 1:
                raise DataError("each sample needs k+1 heights for k changepoints")

    def __len__(self) -> int:
        return len(self.heights)

    @property
    def k(self) -> np.ndarray:
        return np.fromiter((len(s) for s in self.changepoints), dtype=int, count=len(self))

    @property
    def samples(self) -> list[StepRate]:
        return [StepRate(s, h, self.horizon) for s, h in zip(self.changepoints, self.heights)]

    def by_k(self, k: int):
        """Arrays ``(S, H)`` of shape ``(m, k)`` and ``(m, k+1)`` for the samples with ``k`` change-points."""
        idx = np.flatnonzero(self.k == k)
        if idx.size == 0:
            avail = sorted(set(self.k.tolist()))
            raise DataError(f"no samples with k={k}; available k values: {avail}")
        S = np.array([self.changepoints[i] for i in idx], dtype=float).reshape(idx.size, k)
        H = np.array([self.heights[i] for i in idx], dtype=float).reshape(idx.size, k + 1)
        return S, H

    @classmethod
    def from_rates(cls, rates, diagnostics=None) -> "PosteriorEnsemble":
        rates = list(rates)
        if not rates:
            raise DataError("empty ensemble")
        return cls([r.changepoints for r in rates], [r.heights for r in rates], rates[0].horizon, diagnostics or {})

    @classmethod
    def merge(cls, *ensembles: "PosteriorEnsemble") -> "PosteriorEnsemble":
        """Pool several chains (each after its own burn-in)."""
        T = ensembles[0].horizon
        if any(e.horizon != T for e in ensembles):
            raise DataError("cannot merge ensembles with different horizons")
        cps = [s for e in ensembles for s in e.changepoints]
        hts = [h for e in ensembles for h in e.heights]
        return cls(cps, hts, T, {"merged_chains": [e.diagnostics for e in ensembles]})


@dataclass(frozen=True)
class DensityEstimate:
    """Gaussian KDE on a grid, with its mode and raw-sample quartiles and median."""

    grid: np.ndarray
    density: np.ndarray
    bandwidth: float
    mode: float
    q25: float
    median: float
    q75: float

    def to_dict(self) -> dict:
        return {"mode": self.mode, "q25": self.q25, "median": self.median, "q75": self.q75, "bandwidth": self.bandwidth}


def gaussian_kde(samples, bandwidth: float, lo: float, hi: float, n_grid: int = GRID_SIZE) -> DensityEstimate:
    """Fixed-bandwidth Gaussian KDE on ``n_grid`` equally spaced points of ``[lo, hi]``.

    The curve is renormalised to unit trapezoid mass on the grid.
    """
    x = np.asarray(samples, dtype=float).reshape(-1)
    if x.size == 0:
        raise DataError("cannot estimate a density from no samples")
    if not bandwidth > 0:
        raise DataError("bandwidth must be positive")
    grid = np.linspace(lo, hi, n_grid)
    dens = np.zeros(n_grid)
    # chunked to keep the (chunk, grid) matrix small
    for start in range(0, x.size, 1024):
        z = (grid[None, :] - x[start:start + 1024, None]) / bandwidth
        dens += np.exp(-0.5 * z * z).sum(axis=0)
    mass = np.trapezoid(dens, grid)
    if mass > 0:
        dens /= mass
    q25, med, q75 = np.percentile(x, [25, 50, 75])
    return DensityEstimate(grid, dens, float(bandwidth), _refine_mode(x, bandwidth, grid, dens), float(q25), float(med), float(q75))


def _refine_mode(x, bandwidth, grid, dens, max_iter: int = 200) -> float:
    """Polish the grid argmax by mean-shift, whose fixed points are the exact KDE modes."""
    t = float(grid[int(np.argmax(dens))])
    near = x[np.abs(x - t) < 10 * bandwidth]
    if near.size == 0:
        return t
    tol = 1e-12 * max(1.0, abs(t))
    for _ in range(max_iter):
        z = (t - near) / bandwidth
        w = np.exp(-0.5 * z * z)
        if w.sum() == 0:
            break
        t_new = float(np.dot(w, near) / w.sum())
        if abs(t_new - t) <= tol:
            return t_new
        t = t_new
    return t


def k_distribution(ens: PosteriorEnsemble) -> dict[int, float]:
    """Empirical posterior pmf of the number of change-points."""
    if len(ens) == 0:
        raise DataError("empty ensemble")
    ks, counts = np.unique(ens.k, return_counts=True)
    return {int(k): float(c / len(ens)) for k, c in zip(ks, counts)}


def mode_k(pmf: dict[int, float]) -> int:
    """Most frequent ``k``; ties go to the smaller value."""
    best = max(pmf.values())
    return min(k for k, p in pmf.items() if p == best)


def location_summaries(ens: PosteriorEnsemble, k_star: int, bandwidth: float = LOCATION_BANDWIDTH) -> list[DensityEstimate]:
    """KDE of each change-point position over the samples with exactly ``k_star`` change-points."""
    S, _ = ens.by_k(k_star)
    return [gaussian_kde(S[:, j], bandwidth, 0.0, ens.horizon) for j in range(k_star)]


def height_summaries(ens: PosteriorEnsemble, k_star: int, bandwidth: float = HEIGHT_BANDWIDTH) -> list[DensityEstimate]:
    """KDE of each step height over the samples with exactly ``k_star`` change-points."""
    _, H = ens.by_k(k_star)
    return [gaussian_kde(H[:, j], bandwidth, 0.0, 1.2 * float(H[:, j].max())) for j in range(k_star + 1)]


def mean_rate(ens: PosteriorEnsemble, grid, n_sub: int | None = None, rng=None) -> np.ndarray:
    """Pointwise posterior mean of ``lambda(t)`` on ``grid``.

    With ``n_sub`` the average runs over that many samples drawn without
    replacement.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size and (grid.min() < 0 or grid.max() > ens.horizon):
        raise DataError("grid must lie inside [0, T]")
    idx = np.arange(len(ens))
    if n_sub is not None and n_sub < len(ens):
        idx = np.sort(check_random_state(rng).choice(len(ens), size=n_sub, replace=False))
    total = np.zeros_like(grid)
    for i in idx:
        s = np.asarray(ens.changepoints[i])
        h = np.asarray(ens.heights[i])
        total += h[np.searchsorted(s, grid, side="right")]
    return total / idx.size


def point_estimate(
    ens: PosteriorEnsemble, loc_bw: float = LOCATION_BANDWIDTH, h_bw: float = HEIGHT_BANDWIDTH
) -> StepRate:
    """Step rate at the modal ``k`` with KDE-mode positions and heights.

    Falls back to per-index medians of the positions if the modes are not
    strictly increasing.
    """
    k_hat = mode_k(k_distribution(ens))
    if k_hat == 0:
        s = np.empty(0)
    else:
        locs = location_summaries(ens, k_hat, loc_bw)
        s = np.array([d.mode for d in locs])
        if np.any(np.diff(s) <= 0) or s[0] <= 0 or s[-1] >= ens.horizon:
            logger.warning("change-point modes are not increasing; using medians")
            s = np.array([d.median for d in locs])
    h = np.array([d.mode for d in height_summaries(ens, k_hat, h_bw)])
    return StepRate(s, h, ens.horizon)
