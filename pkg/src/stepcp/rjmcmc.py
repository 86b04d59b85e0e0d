"""Reversible-jump Metropolis-Hastings sampler for step-rate Poisson models.

The state is a step rate with ``k`` change-points. Four moves are proposed
with probabilities depending on ``k``: rescale one height, shift one
change-point, split an interval (birth) or merge two neighbours (death).

Priors:

* ``k`` -- Poisson(``mu``) truncated to ``0..k_max``;
* positions -- even-numbered order statistics of ``2k+1`` uniforms on ``[0, T]``;
* heights -- i.i.d. exponential with rate ``gamma`` (default ``T/N``).

The inner loop works on plain Python lists and pre-drawn uniforms; the
``propose_*`` functions expose single moves for inspection and testing.
"""

from __future__ import annotations

import math
import time
from bisect import bisect_left, bisect_right
from dataclasses import dataclass

import numpy as np

from ._exceptions import ConfigurationError, DataError
from ._validation import check_random_state
from .events import ExceedanceSeries, StepRate, log_likelihood

__all__ = [
    "PriorConfig",
    "ChainConfig",
    "ChainState",
    "MoveProbabilities",
    "move_probabilities",
    "move_constant",
    "log_prior",
    "birth_heights",
    "death_height",
    "birth_log_ratio",
    "propose_height",
    "propose_position",
    "propose_birth",
    "propose_death",
    "chain_step",
    "run_chain",
]

MOVES = ("height", "position", "birth", "death")
_EPS_POS = 1e-9


@dataclass(frozen=True)
class PriorConfig:
    mu: float = 4.5
    k_max: int = 20
    gamma: float | None = None
    height_log_step: float = 1.0

    def __post_init__(self):
        if self.k_max < 1:
            raise ConfigurationError("k_max must be at least 1")
        if not self.mu > 0:
            raise ConfigurationError("mu must be positive")
        if self.gamma is not None and not self.gamma > 0:
            raise ConfigurationError("gamma must be positive")

    @property
    def C(self) -> float:
        return move_constant(self.mu, self.k_max)

    def resolve(self, events: ExceedanceSeries) -> "PriorConfig":
        """Fill in ``gamma = T/N`` from the data when it is unset."""
        if self.gamma is not None:
            return self
        if events.n == 0:
            raise ConfigurationError("gamma = T/N is undefined for an empty event series")
        return PriorConfig(self.mu, self.k_max, events.horizon / events.n, self.height_log_step)


@dataclass(frozen=True)
class ChainConfig:
    burn_in: int = 20_000
    n_updates: int = 500_000
    thin: int = 40
    seed: int | None = None

    def __post_init__(self):
        if self.thin < 1 or self.n_updates < self.thin or self.burn_in < 0:
            raise ConfigurationError("need thin >= 1, n_updates >= thin and burn_in >= 0")

    @property
    def n_samples(self) -> int:
        return self.n_updates // self.thin


@dataclass
class ChainState:
    """A step rate with cached log-likelihood and log-prior."""

    rate: StepRate
    log_lik: float
    log_prior: float

    @classmethod
    def from_rate(cls, rate, events, prior, use_likelihood=True) -> "ChainState":
        ll = log_likelihood(rate, events) if use_likelihood else 0.0
        return cls(rate, ll, log_prior(rate, prior))


@dataclass(frozen=True)
class MoveProbabilities:
    eta: float
    pi: float
    b: float
    d: float


def move_constant(mu: float, k_max: int) -> float:
    """Largest ``C`` with ``b_k + d_k <= 0.9`` for every ``k``."""
    worst = max(min(1.0, mu / (k + 1)) + min(1.0, k / mu) for k in range(k_max + 1))
    return 0.9 / worst


def move_probabilities(k: int, cfg: PriorConfig) -> MoveProbabilities:
    """``(eta_k, pi_k, b_k, d_k)``: height, position, birth and death probabilities."""
    if not 0 <= k <= cfg.k_max:
        raise DataError(f"k={k} outside 0..{cfg.k_max}")
    C = cfg.C
    b = C * min(1.0, cfg.mu / (k + 1)) if k < cfg.k_max else 0.0
    d = C * min(1.0, k / cfg.mu) if k > 0 else 0.0
    if k == 0:
        return MoveProbabilities(1.0 - b, 0.0, b, 0.0)
    rest = (1.0 - b - d) / 2
    return MoveProbabilities(rest, rest, b, d)


def _log_truncated_poisson(k: int, mu: float, k_max: int) -> float:
    log_w = [j * math.log(mu) - math.lgamma(j + 1) for j in range(k_max + 1)]
    top = max(log_w)
    log_norm = top + math.log(sum(math.exp(w - top) for w in log_w))
    return log_w[k] - log_norm


def log_prior(rate: StepRate, cfg: PriorConfig) -> float:
    """Joint log prior density of ``(k, s, h)``; ``-inf`` outside the support."""
    if cfg.gamma is None:
        raise ConfigurationError("gamma must be resolved before evaluating the prior")
    k = rate.k
    if k > cfg.k_max:
        return -math.inf
    T = rate.horizon
    gaps = np.diff(rate.bounds)
    lp = _log_truncated_poisson(k, cfg.mu, cfg.k_max)
    lp += math.lgamma(2 * k + 2) - (2 * k + 1) * math.log(T) + float(np.sum(np.log(gaps)))
    lp += (k + 1) * math.log(cfg.gamma) - cfg.gamma * float(np.sum(rate.heights))
    return lp


def birth_heights(h: float, s_left: float, s_star: float, s_right: float, U: float):
    """Split height ``h`` at ``s_star`` so the log-heights keep their length-weighted mean.

    Returns ``(h_left, h_right)`` with ``h_right / h_left = (1 - U) / U``.
    """
    L = s_right - s_left
    a = (s_star - s_left) / L
    log_r = math.log((1.0 - U) / U)
    lh = math.log(h)
    return math.exp(lh - (1.0 - a) * log_r), math.exp(lh + a * log_r)


def death_height(h_left: float, h_right: float, s_left: float, s_mid: float, s_right: float) -> float:
    """Length-weighted geometric mean of two neighbouring heights (inverse of the split)."""
    w = (s_mid - s_left) / (s_right - s_left)
    return math.exp(w * math.log(h_left) + (1.0 - w) * math.log(h_right))


def birth_log_ratio(k, T, s_left, s_star, s_right, h, h1, h2, dll, cfg: PriorConfig, C: float):
    """Log of likelihood x prior x proposal x Jacobian ratios for a birth from ``k``.

    The matching death from ``k + 1`` has exactly the negated value.
    """
    mu, gamma = cfg.mu, cfg.gamma
    L = s_right - s_left
    log_prior_ratio = (
        math.log(mu / (k + 1))
        + math.log(2.0 * (k + 1) * (2 * k + 3))
        - 2.0 * math.log(T)
        + math.log((s_star - s_left) * (s_right - s_star) / L)
        + math.log(gamma)
        - gamma * (h1 + h2 - h)
    )
    b_k = C * min(1.0, mu / (k + 1))
    d_k1 = C * min(1.0, (k + 1) / mu)
    log_proposal = math.log(d_k1 * T / (b_k * (k + 1)))
    log_jacobian = 2.0 * math.log(h1 + h2) - math.log(h)
    return dll + log_prior_ratio + log_proposal + log_jacobian


class _Sampler:
    """Mutable chain state on plain lists.

    ``s`` holds ``[0, s_1, ..., s_k, T]``; ``c[j]`` is the number of events
    before ``s[j]`` (``c[-1] = n``), so interval ``j`` holds ``c[j+1] - c[j]``
    events.
    """

    def __init__(self, events: ExceedanceSeries, cfg: PriorConfig, rate: StepRate, use_likelihood=True):
        self.ev = events.times.tolist()
        self.n = len(self.ev)
        self.T = float(events.horizon)
        self.cfg = cfg
        self.gamma = float(cfg.gamma)
        self.C = cfg.C
        self.use_lik = use_likelihood
        self.s = rate.bounds.tolist()
        self.h = rate.heights.tolist()
        self.c = [0] + [bisect_left(self.ev, x) for x in self.s[1:-1]] + [self.n]
        self.log_lik = self.full_log_lik()
        self.log_prior = log_prior(rate, cfg)
        self.table = [move_probabilities(k, cfg) for k in range(cfg.k_max + 1)]
        self.cum_table = [(p.eta, p.eta + p.pi, p.eta + p.pi + p.b) for p in self.table]
        self.proposed = dict.fromkeys(MOVES, 0)
        self.accepted = dict.fromkeys(MOVES, 0)

    @property
    def k(self) -> int:
        return len(self.h) - 1

    def rate(self) -> StepRate:
        return StepRate(self.s[1:-1], self.h, self.T)

    def full_log_lik(self) -> float:
        if not self.use_lik:
            return 0.0
        s, h, c = self.s, self.h, self.c
        return sum((c[j + 1] - c[j]) * math.log(h[j]) - h[j] * (s[j + 1] - s[j]) for j in range(len(h)))

    # each move returns (log_acceptance, dll, dlp, apply) without mutating state

    def height_move(self, j: int, step: float):
        h0 = self.h[j]
        log_ratio = step * self.cfg.height_log_step
        h1 = h0 * math.exp(log_ratio)
        dll = 0.0
        if self.use_lik:
            dll = (self.c[j + 1] - self.c[j]) * log_ratio - (h1 - h0) * (self.s[j + 1] - self.s[j])
        # log-uniform proposal: q-ratio h1/h0 cancels the 1/h Jacobian
        dlp = -self.gamma * (h1 - h0)
        log_acc = dll + dlp + log_ratio

        def apply():
            self.h[j] = h1

        return log_acc, dll, dlp, apply

    def position_move(self, j: int, s_new: float):
        s = self.s
        left, old, right = s[j - 1], s[j], s[j + 1]
        if s_new - left < _EPS_POS or right - s_new < _EPS_POS:
            return -math.inf, 0.0, 0.0, None
        c_new = bisect_left(self.ev, s_new)
        dll = 0.0
        if self.use_lik:
            ha, hb = self.h[j - 1], self.h[j]
            dll = (c_new - self.c[j]) * (math.log(ha) - math.log(hb)) - (ha - hb) * (s_new - old)
        dlp = math.log((right - s_new) * (s_new - left)) - math.log((right - old) * (old - left))
        log_acc = dll + dlp

        def apply():
            s[j] = s_new
            self.c[j] = c_new

        return log_acc, dll, dlp, apply

    def birth_move(self, s_star: float, U: float):
        s = self.s
        k = self.k
        j = bisect_right(s, s_star) - 1
        if j > k:
            j = k
        left, right = s[j], s[j + 1]
        if s_star - left < _EPS_POS or right - s_star < _EPS_POS or not 0.0 < U < 1.0:
            return -math.inf, 0.0, 0.0, None
        h = self.h[j]
        h1, h2 = birth_heights(h, left, s_star, right, U)
        c_star = bisect_left(self.ev, s_star)
        dll = 0.0
        if self.use_lik:
            n1, n2 = c_star - self.c[j], self.c[j + 1] - c_star
            dll = (
                n1 * math.log(h1) + n2 * math.log(h2) - (n1 + n2) * math.log(h)
                - h1 * (s_star - left) - h2 * (right - s_star) + h * (right - left)
            )
        log_acc = birth_log_ratio(k, self.T, left, s_star, right, h, h1, h2, dll, self.cfg, self.C)
        dlp = (
            math.log(self.cfg.mu / (k + 1))
            + math.log(2.0 * (k + 1) * (2 * k + 3)) - 2.0 * math.log(self.T)
            + math.log((s_star - left) * (right - s_star) / (right - left))
            + math.log(self.gamma) - self.gamma * (h1 + h2 - h)
        )

        def apply():
            s.insert(j + 1, s_star)
            self.c.insert(j + 1, c_star)
            self.h[j] = h1
            self.h.insert(j + 1, h2)

        return log_acc, dll, dlp, apply

    def death_move(self, i: int):
        """Remove change-point ``s_i`` (``1 <= i <= k``), merging intervals ``i-1`` and ``i``."""
        s = self.s
        k = self.k
        left, mid, right = s[i - 1], s[i], s[i + 1]
        h1, h2 = self.h[i - 1], self.h[i]
        h = death_height(h1, h2, left, mid, right)
        dll = 0.0
        if self.use_lik:
            n1, n2 = self.c[i] - self.c[i - 1], self.c[i + 1] - self.c[i]
            dll = (
                (n1 + n2) * math.log(h) - n1 * math.log(h1) - n2 * math.log(h2)
                - h * (right - left) + h1 * (mid - left) + h2 * (right - mid)
            )
        log_acc = -birth_log_ratio(k - 1, self.T, left, mid, right, h, h1, h2, -dll, self.cfg, self.C)
        dlp = -(
            math.log(self.cfg.mu / k)
            + math.log(2.0 * k * (2 * k + 1)) - 2.0 * math.log(self.T)
            + math.log((mid - left) * (right - mid) / (right - left))
            + math.log(self.gamma) - self.gamma * (h1 + h2 - h)
        )

        def apply():
            del s[i]
            del self.c[i]
            self.h[i - 1] = h
            del self.h[i]

        return log_acc, dll, dlp, apply

    def step(self, u0: float, u1: float, u2: float, u3: float, u4: float) -> str:
        """One update from five uniforms: move type, index, value, auxiliary, accept."""
        k = self.k
        e, ep, epb = self.cum_table[k]
        if u0 < e:
            move = "height"
            res = self.height_move(min(int(u1 * (k + 1)), k), u2 - 0.5)
        elif u0 < ep:
            move = "position"
            j = 1 + min(int(u1 * k), k - 1)
            res = self.position_move(j, self.s[j - 1] + u2 * (self.s[j + 1] - self.s[j - 1]))
        elif u0 < epb:
            move = "birth"
            res = self.birth_move(u2 * self.T, u3)
        else:
            move = "death"
            res = self.death_move(1 + min(int(u1 * k), k - 1))
        self.proposed[move] += 1
        log_acc, dll, dlp, apply = res
        if apply is not None and (log_acc >= 0.0 or (u4 > 0.0 and math.log(u4) < log_acc)):
            apply()
            self.log_lik += dll
            self.log_prior += dlp
            self.accepted[move] += 1
        return move

    def check_caches(self, tol: float = 1e-9):
        rate = self.rate()
        ll, lp = self.full_log_lik(), log_prior(rate, self.cfg)
        if abs(ll - self.log_lik) > tol * max(1.0, abs(ll)) or abs(lp - self.log_prior) > tol * max(1.0, abs(lp)):
            raise AssertionError(f"cache drift: loglik {self.log_lik} vs {ll}, logprior {self.log_prior} vs {lp}")


def _state_of(sampler: _Sampler) -> ChainState:
    return ChainState(sampler.rate(), sampler.log_lik, sampler.log_prior)


def _sampler_for(state: ChainState, events, cfg, use_likelihood=True) -> _Sampler:
    return _Sampler(events, cfg, state.rate, use_likelihood)


def propose_height(state: ChainState, events, cfg: PriorConfig, rng=None):
    """Propose ``h'_j = h_j exp(V)``, ``V ~ U[-1/2, 1/2]``. Returns ``(j, h'_j, log_acceptance)``."""
    rng = check_random_state(rng)
    sm = _sampler_for(state, events, cfg)
    k = sm.k
    j = int(rng.integers(k + 1))
    step = float(rng.uniform(-0.5, 0.5))
    log_acc = sm.height_move(j, step)[0]
    return j, sm.h[j] * math.exp(step * cfg.height_log_step), min(0.0, log_acc)


def propose_position(state: ChainState, events, cfg: PriorConfig, rng=None):
    """Propose ``s'_j ~ U[s_{j-1}, s_{j+1}]``. Returns ``(j, s'_j, log_acceptance)``."""
    if state.rate.k < 1:
        raise DataError("position move needs at least one change-point")
    rng = check_random_state(rng)
    sm = _sampler_for(state, events, cfg)
    j = 1 + int(rng.integers(sm.k))
    s_new = float(rng.uniform(sm.s[j - 1], sm.s[j + 1]))
    return j, s_new, min(0.0, sm.position_move(j, s_new)[0])


def propose_birth(state: ChainState, events, cfg: PriorConfig, rng=None):
    """Propose a new change-point ``s* ~ U[0, T]`` with split heights.

    Returns ``(s*, h'_j, h'_{j+1}, log_acceptance)``.
    """
    if state.rate.k >= cfg.k_max:
        raise DataError("birth move is disabled at k_max")
    rng = check_random_state(rng)
    sm = _sampler_for(state, events, cfg)
    while True:
        s_star = float(rng.uniform(0.0, sm.T))
        if s_star not in sm.s:
            break
    U = float(rng.uniform())
    j = bisect_right(sm.s, s_star) - 1
    h1, h2 = birth_heights(sm.h[j], sm.s[j], s_star, sm.s[j + 1], U)
    return s_star, h1, h2, min(0.0, sm.birth_move(s_star, U)[0])


def propose_death(state: ChainState, events, cfg: PriorConfig, rng=None):
    """Propose removing a uniformly chosen change-point. Returns ``(j, h'_j, log_acceptance)``.

    ``j`` is the index (1-based) of the removed change-point; the merged
    height replaces intervals ``j-1`` and ``j``.
    """
    if state.rate.k < 1:
        raise DataError("death move needs at least one change-point")
    rng = check_random_state(rng)
    sm = _sampler_for(state, events, cfg)
    i = 1 + int(rng.integers(sm.k))
    h = death_height(sm.h[i - 1], sm.h[i], sm.s[i - 1], sm.s[i], sm.s[i + 1])
    return i, h, min(0.0, sm.death_move(i)[0])


def chain_step(state: ChainState, events, cfg: PriorConfig, rng=None, use_likelihood=True) -> ChainState:
    """Apply one Metropolis-Hastings update and return the (possibly unchanged) state."""
    rng = check_random_state(rng)
    sm = _Sampler(events, cfg, state.rate, use_likelihood)
    sm.log_lik, sm.log_prior = state.log_lik, state.log_prior
    sm.step(*rng.random(5).tolist())
    return _state_of(sm)


def _initial_rate(events: ExceedanceSeries) -> StepRate:
    n = events.n
    return StepRate([], [max(n, 1) / events.horizon], events.horizon)


def run_chain(
    events: ExceedanceSeries,
    prior: PriorConfig = PriorConfig(),
    cc: ChainConfig = ChainConfig(),
    rng=None,
    initial: StepRate | None = None,
    use_likelihood: bool = True,
    check_every: int = 0,
    block: int = 16384,
):
    """Run burn-in then ``n_updates`` steps, keeping every ``thin``-th state.

    ``use_likelihood=False`` samples the prior (the data only fix ``T`` and,
    if unset, ``gamma``). ``check_every > 0`` recomputes the cached
    likelihood and prior at that interval and raises on drift.
    """
    from .posterior import PosteriorEnsemble

    rng = check_random_state(cc.seed if rng is None else rng)
    prior = prior.resolve(events)
    sm = _Sampler(events, prior, initial or _initial_rate(events), use_likelihood)
    total = cc.burn_in + cc.n_updates
    thin, burn = cc.thin, cc.burn_in
    cps, hts = [], []
    started = time.perf_counter()
    done = 0
    step = sm.step
    while done < total:
        m = min(block, total - done)
        for row in rng.random((m, 5)).tolist():
            step(*row)
            done += 1
            if done > burn and (done - burn) % thin == 0:
                cps.append(tuple(sm.s[1:-1]))
                hts.append(tuple(sm.h))
            if check_every and done % check_every == 0:
                sm.check_caches()
    elapsed = time.perf_counter() - started
    diagnostics = {
        "proposed": dict(sm.proposed),
        "accepted": dict(sm.accepted),
        "acceptance_rate": {m: (sm.accepted[m] / sm.proposed[m] if sm.proposed[m] else 0.0) for m in MOVES},
        "steps": total,
        "seconds": elapsed,
        "gamma": prior.gamma,
        "final_log_likelihood": sm.log_lik,
        "final_log_prior": sm.log_prior,
    }
    return PosteriorEnsemble(cps, hts, events.horizon, diagnostics)
