"""Betting-parameter policies for the e-detector recursions.

The admissible bets for an observable with estimate range [l, u] form
the interval (-1/u, -1/l); a slack pulled in from both ends keeps every
capital multiplier strictly positive.  Three policies produce bets from
past estimates: a constant bet, a discretized universal-portfolio
expert, and the coin-betting-over-covering-intervals meta-aggregator
(CBCE) that tracks the best expert on every geometric time interval.
The growth-rate estimator computes the oracle log-growth ceiling that
detection delays are measured against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .shadows import can_enumerate, estimator_bounds, outcome_distribution, sample_estimates

UP_GRID_SIZE = 64
GROWTH_GRID_SIZE = 201
GROWTH_SHOTS = 100_000

# fraction of the unslacked interval width pulled in from each end
DEFAULT_SLACK_FRACTION = 0.005

_MC_CHUNK = 4096


def _bounds_pair(bounds):
    if hasattr(bounds, "lower"):
        return float(bounds.lower), float(bounds.upper)
    lo, hi = bounds
    return float(lo), float(hi)


@dataclass(frozen=True)
class LambdaInterval:
    """Closed interval of admissible bets, with the slack that shaped it."""

    lo: float
    hi: float
    slack: float = 0.0

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"empty betting interval [{self.lo!r}, {self.hi!r}]")
        if self.slack < 0.0:
            raise ValueError("slack must be nonnegative")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, lam: float) -> bool:
        return self.lo <= lam <= self.hi

    def clip(self, lam: float) -> float:
        return min(max(lam, self.lo), self.hi)

    def nonnegative(self) -> "LambdaInterval":
        """The sub-interval of bets that never profit from a falling estimate."""
        if self.hi <= 0.0:
            raise ValueError("interval has no nonnegative part")
        return LambdaInterval(0.0, self.hi, self.slack)


def default_slack(bounds) -> float:
    lower, upper = _bounds_pair(bounds)
    width = (-1.0 / lower) - (-1.0 / upper)
    return DEFAULT_SLACK_FRACTION * width


def lambda_interval(bounds, slack=None) -> LambdaInterval:
    """Admissible bets (-1/u + slack, -1/l - slack) for estimates in [l, u]."""
    lower, upper = _bounds_pair(bounds)
    if lower >= 0.0 or upper <= 0.0:
        raise ValueError(
            f"estimate range [{lower!r}, {upper!r}] must straddle 0 for sign-indefinite betting"
        )
    if slack is None:
        slack = default_slack(bounds)
    if slack < 0.0:
        raise ValueError("slack must be nonnegative")
    lo = -1.0 / upper + slack
    hi = -1.0 / lower - slack
    if not lo < hi:
        raise ValueError(f"slack {slack!r} empties the betting interval")
    return LambdaInterval(lo, hi, slack)


def chebyshev_grid(interval: LambdaInterval, k: int = UP_GRID_SIZE) -> np.ndarray:
    """Interior Chebyshev nodes of the interval, increasing, endpoint-free.

    Uniform weights over these nodes integrate against the arcsine
    (Beta(1/2,1/2)) prior rescaled to the interval.
    """
    if k < 1:
        raise ValueError("grid must have at least one point")
    nodes = np.cos((2.0 * np.arange(1, k + 1) - 1.0) * math.pi / (2.0 * k))
    grid = interval.lo + interval.width * (1.0 + nodes) / 2.0
    return np.sort(grid)


class ConstantBettor:
    """Fixed bet, mostly a reference policy for tests and oracles."""

    def __init__(self, lam: float, interval: LambdaInterval | None = None):
        if interval is not None and not interval.contains(lam):
            raise ValueError(f"bet {lam!r} outside [{interval.lo!r}, {interval.hi!r}]")
        self.lam = float(lam)

    def step(self, o_prev=None) -> float:
        return self.lam


class UPExpert:
    """Discretized universal-portfolio bettor.

    Holds wealth per grid point; the bet is the wealth-weighted average
    of the grid, so it tracks the best fixed bet up to a logarithmic
    regret plus the grid gap.
    """

    def __init__(self, interval: LambdaInterval, start_time: int = 1, o_bounds=None, k: int = UP_GRID_SIZE):
        self.interval = interval
        self.start_time = int(start_time)
        if self.start_time < 1:
            raise ValueError("start_time must be >= 1")
        self.o_bounds = None if o_bounds is None else _bounds_pair(o_bounds)
        self.grid = chebyshev_grid(interval, k)
        self.prior_weights = np.full(k, 1.0 / k)
        self.log_wealth = np.zeros(k)

    def bet(self) -> float:
        shift = self.log_wealth.max()
        w = self.prior_weights * np.exp(self.log_wealth - shift)
        return float((w @ self.grid) / w.sum())

    def update(self, o_hat: float) -> None:
        self._check_estimate(o_hat)
        self.log_wealth += np.log1p(self.grid * o_hat)

    def _check_estimate(self, o_hat: float) -> None:
        if self.o_bounds is None:
            return
        lower, upper = self.o_bounds
        if not lower - 1e-9 <= o_hat <= upper + 1e-9:
            raise ValueError(f"estimate {o_hat!r} outside the declared range [{lower!r}, {upper!r}]")


def covering_intervals(t: int):
    """The geometric intervals [i*2^k, (i+1)*2^k - 1], i >= 1, containing t."""
    if t < 1:
        raise ValueError("time starts at 1")
    out = []
    k = 0
    while (t >> k) >= 1:
        start = (t >> k) << k
        out.append((start, start + (1 << k) - 1))
        k += 1
    return out


@dataclass
class _CoinEntry:
    # one covering interval: its expert's coin state plus the cached bet round
    t1: int
    t2: int
    sum_g: float = 0.0
    wealth: float = 1.0
    rounds: int = 0
    beta: float = 0.0
    lam: float = 0.0
    backed: bool = False


class CBCEBettor:
    """Coin-betting-over-covering-intervals aggregation of UP experts.

    One expert lives on each active covering interval; a coin-betting
    meta-learner weights their bets by how much better than the
    aggregate each expert has been.  Restarting experts on geometric
    intervals is what buys adaptivity to the changepoint.

    Call ``step(o_prev)`` once per time step, passing the estimate
    observed after the previous bet (absent only on the first call).
    """

    def __init__(self, interval: LambdaInterval, o_bounds, k: int = UP_GRID_SIZE):
        self.interval = interval
        self.o_bounds = _bounds_pair(o_bounds)
        self.k = int(k)
        self.grid = chebyshev_grid(interval, k)
        self.t = 1
        self.entries: list[_CoinEntry] = []
        self._log_wealth = np.zeros((0, self.k))
        self.last_lam = 0.0
        self.last_weights = np.zeros(0)
        self.loss_bound = self._loss_bound()

    def _loss_bound(self) -> float:
        lower, upper = self.o_bounds
        corners = [
            1.0 + lam * o
            for lam in (self.interval.lo, self.interval.hi)
            for o in (lower, upper)
        ]
        m_min = min(corners)
        m_max = max(corners)
        if not m_min > 0.0:
            raise ValueError(
                "betting interval admits a nonpositive multiplier; increase the slack"
            )
        return max(abs(math.log(m_min)), abs(math.log(m_max)))

    def step(self, o_prev=None) -> float:
        if self.t == 1:
            if o_prev is not None:
                raise ValueError("no estimate precedes the first bet")
        elif o_prev is None:
            raise ValueError(f"step {self.t} needs the estimate observed at step {self.t - 1}")
        if o_prev is not None:
            self._absorb(float(o_prev))
        self._refresh_active()
        return self._bet()

    def _absorb(self, o_hat: float) -> None:
        lower, upper = self.o_bounds
        if not lower - 1e-9 <= o_hat <= upper + 1e-9:
            raise ValueError(f"estimate {o_hat!r} outside the declared range [{lower!r}, {upper!r}]")
        scale = 2.0 * self.loss_bound
        meta_loss = -math.log1p(self.last_lam * o_hat)
        for entry in self.entries:
            g = (meta_loss + math.log1p(entry.lam * o_hat)) / scale
            g = min(1.0, max(-1.0, g))
            if not entry.backed:
                g = max(g, 0.0)
            entry.wealth *= 1.0 + entry.beta * g
            entry.sum_g += g
            entry.rounds += 1
        self._log_wealth += np.log1p(self.grid * o_hat)

    def _refresh_active(self) -> None:
        t = self.t
        keep = [i for i, e in enumerate(self.entries) if e.t2 >= t]
        if len(keep) != len(self.entries):
            self.entries = [self.entries[i] for i in keep]
            self._log_wealth = self._log_wealth[keep]
        born = [(t1, t2) for t1, t2 in covering_intervals(t) if t1 == t]
        if born:
            self.entries.extend(_CoinEntry(t1, t2) for t1, t2 in born)
            self._log_wealth = np.vstack([self._log_wealth, np.zeros((len(born), self.k))])

    def _bet(self) -> float:
        prior = np.array([
            1.0 / (e.t1 * e.t1 * (1 + int(math.log2(e.t1)))) for e in self.entries
        ])
        prior /= prior.sum()
        shift = self._log_wealth.max(axis=1, keepdims=True)
        w = np.exp(self._log_wealth - shift)
        lams = (w @ self.grid) / w.sum(axis=1)
        raw = np.empty(len(self.entries))
        for i, entry in enumerate(self.entries):
            entry.beta = entry.sum_g / (entry.rounds + 1)
            entry.lam = float(lams[i])
            raw[i] = prior[i] * max(0.0, entry.beta * entry.wealth)
            entry.backed = raw[i] > 0.0
        total = raw.sum()
        weights = raw / total if total > 0.0 else prior
        self.last_weights = weights
        self.last_lam = self.interval.clip(float(weights @ lams))
        self.t += 1
        return self.last_lam


@dataclass(frozen=True)
class GrowthEstimate:
    """Best achievable expected log-growth over the betting grid."""

    d_star: float
    i_star: int
    lambda_star: float
    per_observable: tuple


def _growth_grid(interval: LambdaInterval, grid_size: int) -> np.ndarray:
    grid = np.linspace(interval.lo, interval.hi, grid_size)
    # pin the node nearest zero to exactly zero so "no bet" is always on the grid
    grid[np.abs(grid).argmin()] = 0.0
    return grid


def estimate_growth_rate(
    rho1,
    observables,
    kind,
    grid_size: int = GROWTH_GRID_SIZE,
    shots: int = GROWTH_SHOTS,
    rng=None,
    slack=None,
    bounds_mode: str = "auto",
) -> GrowthEstimate:
    """Per-observable max expected log-growth of the betting capital.

    Uses the exact outcome distribution whenever the ensemble/width pair
    is enumerable, Monte Carlo with ``shots`` draws otherwise.
    """
    if grid_size < 1:
        raise ValueError("growth grid must be nonempty")
    if len(observables) == 0:
        raise ValueError("need at least one observable")
    d = rho1.n_qubits
    enumerable = can_enumerate(kind, d)
    if bounds_mode == "auto":
        bounds_mode = "exhaustive" if enumerable else "analytic"

    grids = []
    for obs in observables:
        bounds = estimator_bounds(obs, kind, mode=bounds_mode)
        grids.append(_growth_grid(lambda_interval(bounds, slack), grid_size))

    n = len(observables)
    if enumerable:
        probs, values = outcome_distribution(rho1, observables, kind)
        curves = [
            probs @ np.log1p(values[:, [i]] * grids[i][None, :]) for i in range(n)
        ]
    else:
        rng = np.random.default_rng(rng)
        sums = [np.zeros(grid_size) for _ in range(n)]
        done = 0
        while done < shots:
            take = min(_MC_CHUNK, shots - done)
            block = np.empty((take, n))
            for s in range(take):
                block[s] = sample_estimates(rho1, observables, kind, rng)
            for i in range(n):
                sums[i] += np.log1p(block[:, [i]] * grids[i][None, :]).sum(axis=0)
            done += take
        curves = [s / shots for s in sums]

    per = []
    lam_at = []
    for i in range(n):
        j = int(curves[i].argmax())
        per.append(float(curves[i][j]))
        lam_at.append(float(grids[i][j]))
    i_star = int(np.argmax(per))
    return GrowthEstimate(
        d_star=per[i_star],
        i_star=i_star,
        lambda_star=lam_at[i_star],
        per_observable=tuple(per),
    )
