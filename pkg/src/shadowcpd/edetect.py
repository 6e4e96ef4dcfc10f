"""Betting-based e-detectors for sequential changepoint detection.

Each monitored observable carries a Shiryaev-Roberts statistic and a
CUSUM statistic, both driven by positive capital multipliers
L = 1 + lambda * o_hat.  A weighted mixture across observables is
compared against a threshold (1/alpha for SR, c_alpha for CUSUM) and
crossing it is the detection event.

Statistics are held in linear scale so the recursions stay exact at
ordinary magnitudes; once a value passes ``PROMOTE_AT`` a log offset
absorbs the excess, so post-change exponential growth cannot overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# mantissa cap before a factor is moved into the log offset
PROMOTE_AT = 1e12
_LOG_PROMOTE = math.log(PROMOTE_AT)
_EXP_MAX = 709.0  # largest safe argument to math.exp

SR = "sr"
CUSUM = "cusum"

CONTINUE = "continue"
STOP = "stop"


def _to_linear(m: float, log_off: float) -> float:
    if log_off == 0.0:
        return m
    if m == 0.0:
        return 0.0
    x = math.log(m) + log_off
    return math.exp(x) if x < _EXP_MAX else math.inf


def _to_log(m: float, log_off: float) -> float:
    if m == 0.0:
        return -math.inf
    return math.log(m) + log_off


@dataclass
class PerObservableState:
    """SR and CUSUM statistics for a single observable.

    The tracked value is m * exp(log_off); promotion keeps the mantissa
    below ``PROMOTE_AT`` so long products of multipliers remain finite.
    Fresh states start at zero with zero offset.
    """

    m_sr: float = 0.0
    m_cu: float = 0.0
    log_off_sr: float = 0.0
    log_off_cu: float = 0.0

    def sr_statistic(self) -> float:
        return _to_linear(self.m_sr, self.log_off_sr)

    def cusum_statistic(self) -> float:
        return _to_linear(self.m_cu, self.log_off_cu)

    def log_sr_statistic(self) -> float:
        return _to_log(self.m_sr, self.log_off_sr)

    def log_cusum_statistic(self) -> float:
        return _to_log(self.m_cu, self.log_off_cu)

    def copy(self) -> "PerObservableState":
        return PerObservableState(self.m_sr, self.m_cu, self.log_off_sr, self.log_off_cu)


@dataclass(frozen=True)
class DetectorConfig:
    """Mixture weights, error level, and recursion kind for a detector."""

    weights: tuple
    alpha: float
    kind: str = SR
    cusum_threshold: float | None = None

    def __post_init__(self):
        w = tuple(float(x) for x in self.weights)
        object.__setattr__(self, "weights", w)
        if len(w) == 0:
            raise ValueError("weights must be nonempty")
        if any(x <= 0.0 for x in w):
            raise ValueError("all mixture weights must be positive")
        if abs(sum(w) - 1.0) > 1e-12:
            raise ValueError(f"mixture weights must sum to 1, got {sum(w)!r}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha!r}")
        if self.kind not in (SR, CUSUM):
            raise ValueError(f"kind must be {SR!r} or {CUSUM!r}, got {self.kind!r}")
        if self.cusum_threshold is not None and not self.cusum_threshold > 0.0:
            raise ValueError("cusum_threshold must be positive")

    @property
    def n_observables(self) -> int:
        return len(self.weights)

    @property
    def threshold(self) -> float:
        if self.kind == CUSUM and self.cusum_threshold is not None:
            return self.cusum_threshold
        return 1.0 / self.alpha


@dataclass(frozen=True)
class DetectorOutput:
    """Mixture value, continue/stop decision, and state snapshots."""

    mixture: float
    decision: str
    per_obs: tuple


def uniform_weights(n: int) -> tuple:
    if n < 1:
        raise ValueError("need at least one observable")
    return (1.0 / n,) * n


def baseline_increment(lam: float, o_hat: float, lam_bounds=None) -> float:
    """Capital multiplier 1 + lam * o_hat for one betting round.

    ``lam_bounds``, when given as (lo, hi), is the admissible interval
    that keeps the multiplier positive for every estimate the bounds
    allow; a bet outside it is rejected.
    """
    if lam_bounds is not None:
        lo, hi = lam_bounds
        if not lo <= lam <= hi:
            raise ValueError(f"bet {lam!r} outside admissible interval [{lo!r}, {hi!r}]")
    incr = 1.0 + lam * o_hat
    if not incr > 0.0:
        raise ValueError(f"nonpositive capital multiplier {incr!r} from lam={lam!r}, o_hat={o_hat!r}")
    return incr


def sr_update(state: PerObservableState, incr: float) -> PerObservableState:
    """Shiryaev-Roberts recursion m <- L * (m + 1), in place."""
    if not incr > 0.0:
        raise ValueError(f"capital multiplier must be positive, got {incr!r}")
    state.m_sr = incr * (state.m_sr + math.exp(-state.log_off_sr))
    while state.m_sr > PROMOTE_AT:
        state.m_sr /= PROMOTE_AT
        state.log_off_sr += _LOG_PROMOTE
    return state


def cusum_update(state: PerObservableState, incr: float) -> PerObservableState:
    """CUSUM recursion m <- L * max(m, 1), in place."""
    if not incr > 0.0:
        raise ValueError(f"capital multiplier must be positive, got {incr!r}")
    state.m_cu = incr * max(state.m_cu, math.exp(-state.log_off_cu))
    while state.m_cu > PROMOTE_AT:
        state.m_cu /= PROMOTE_AT
        state.log_off_cu += _LOG_PROMOTE
    return state


def mixture_statistic(config: DetectorConfig, per_obs) -> float:
    """Weighted mixture of the configured statistic across observables."""
    if len(per_obs) != config.n_observables:
        raise ValueError(f"expected {config.n_observables} states, got {len(per_obs)}")
    if config.kind == SR:
        pairs = [(s.m_sr, s.log_off_sr) for s in per_obs]
    else:
        pairs = [(s.m_cu, s.log_off_cu) for s in per_obs]
    if all(off == 0.0 for _, off in pairs):
        return sum(w * m for w, (m, _) in zip(config.weights, pairs))
    logs = [math.log(w) + _to_log(m, off) for w, (m, off) in zip(config.weights, pairs)]
    lm = float(np.logaddexp.reduce(logs))
    return math.exp(lm) if lm < _EXP_MAX else math.inf


class SequentialDetector:
    """Mixture e-detector over a stream of per-observable multipliers.

    ``advance`` consumes one round of multipliers (``None`` leaves an
    observable untouched, as when only one observable is measured per
    step) and reports whether the detector has stopped.  A stopped
    detector latches; stepping it again is an error.
    """

    def __init__(self, config: DetectorConfig):
        self.config = config
        n = config.n_observables
        self._w = np.asarray(config.weights, dtype=float)
        self._logw = np.log(self._w)
        self._msr = np.zeros(n)
        self._mcu = np.zeros(n)
        self._osr = np.zeros(n)
        self._ocu = np.zeros(n)
        self._log_threshold = math.log(config.threshold)
        self.stopped = False
        self.t = 0

    @property
    def n_observables(self) -> int:
        return self._msr.size

    def advance(self, increments) -> bool:
        if self.stopped:
            raise RuntimeError("detector already stopped; cannot step further")
        if len(increments) != self.n_observables:
            raise ValueError(f"expected {self.n_observables} increments, got {len(increments)}")
        self.t += 1
        for i, incr in enumerate(increments):
            if incr is None:
                continue
            if not incr > 0.0:
                raise ValueError(f"capital multiplier must be positive, got {incr!r}")
            self._msr[i] = incr * (self._msr[i] + math.exp(-self._osr[i]))
            while self._msr[i] > PROMOTE_AT:
                self._msr[i] /= PROMOTE_AT
                self._osr[i] += _LOG_PROMOTE
            self._mcu[i] = incr * max(self._mcu[i], math.exp(-self._ocu[i]))
            while self._mcu[i] > PROMOTE_AT:
                self._mcu[i] /= PROMOTE_AT
                self._ocu[i] += _LOG_PROMOTE
        mixture, stop = self._decide()
        if stop:
            self.stopped = True
        return stop

    def step_and_decide(self, increments) -> DetectorOutput:
        stop = self.advance(increments)
        mixture, _ = self._decide()
        snaps = tuple(
            PerObservableState(self._msr[i], self._mcu[i], self._osr[i], self._ocu[i])
            for i in range(self.n_observables)
        )
        return DetectorOutput(mixture=mixture, decision=STOP if stop else CONTINUE, per_obs=snaps)

    def mixture(self) -> float:
        return self._decide()[0]

    def states(self) -> tuple:
        return tuple(
            PerObservableState(self._msr[i], self._mcu[i], self._osr[i], self._ocu[i])
            for i in range(self.n_observables)
        )

    def _decide(self):
        if self.config.kind == SR:
            m, off = self._msr, self._osr
        else:
            m, off = self._mcu, self._ocu
        if not off.any():
            # exact in linear scale, so a boundary hit M == threshold stops
            mixture = float(np.dot(self._w, m))
            return mixture, mixture >= self.config.threshold
        with np.errstate(divide="ignore"):
            logs = self._logw + np.log(m) + off
        lm = float(np.logaddexp.reduce(logs))
        mixture = math.exp(lm) if lm < _EXP_MAX else math.inf
        return mixture, lm >= self._log_threshold
