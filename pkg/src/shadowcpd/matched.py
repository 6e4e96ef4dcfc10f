"""Matched-measurement baselines: eigenbasis measurements and scheduling.

A detector that knows which observables matter can measure each one in
its own eigenbasis instead of through randomized shadows.  The outcome
is an eigenvalue, so the betting range is (eig_min, eig_max) rather
than the shadow estimator's inflated range.  Since only one observable
can be measured per step, a scheduler picks the index: round-robin
cycling or UCB on the observed capital increments.
"""

from __future__ import annotations

import math

import numpy as np

from .qcore import hermitian_eig

UCB_DEFAULT_DELTA = 0.1


class ProjectiveMeasurement:
    """Measurement in one observable's eigenbasis; outcomes are eigenvalues."""

    def __init__(self, obs):
        self.observable = obs
        self.eigensystem = hermitian_eig(obs.mat)
        self.outcome_values = self.eigensystem.eigenvalues.copy()
        # Born weights need <v_x|rho|v_x>; keep the conjugated columns ready
        self._bras = self.eigensystem.eigenvectors.conj().T

    @property
    def dim(self) -> int:
        return self.outcome_values.size


def projective_measure(pm: ProjectiveMeasurement, rho, rng) -> float:
    """Draw one eigenvalue outcome with Born probabilities <v_x|rho|v_x>."""
    if rho.dim != pm.dim:
        raise ValueError(f"state dimension {rho.dim} does not match measurement dimension {pm.dim}")
    probs = np.einsum("xi,ij,xj->x", pm._bras, rho.mat, pm._bras.conj(), optimize=True).real
    probs = np.where((probs < 0.0) & (probs > -1e-10), 0.0, probs)
    if probs.min() < 0.0:
        raise ValueError(f"negative Born probability {probs.min()!r}")
    total = probs.sum()
    if abs(total - 1.0) > 1e-7:
        raise ValueError(f"Born probabilities sum to {total!r}")
    probs = probs / total
    x = int(np.searchsorted(np.cumsum(probs), rng.random(), side="right"))
    x = min(x, probs.size - 1)
    return float(pm.outcome_values[x])


class UCBStats:
    """Per-index selection counts and increment sums for UCB scheduling."""

    def __init__(self, n: int, delta: float = UCB_DEFAULT_DELTA):
        if n < 1:
            raise ValueError("need at least one index")
        if not 0.0 < delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {delta!r}")
        self.delta = float(delta)
        self.counts = np.zeros(n, dtype=np.int64)
        self.increment_sums = np.zeros(n)

    @property
    def n(self) -> int:
        return self.counts.size

    def record(self, index: int, increment: float) -> None:
        self.counts[index] += 1
        self.increment_sums[index] += increment

    def scores(self) -> np.ndarray:
        if self.counts.min() < 1:
            raise ValueError("UCB scores need every index selected at least once")
        means = self.increment_sums / self.counts
        return means + np.sqrt(2.0 * math.log(1.0 / self.delta) / self.counts)


def select_index(mode: str, t: int, n: int, stats: UCBStats | None = None) -> int:
    """Index (0-based) of the observable to measure at step t >= 1.

    Round-robin cycles in order.  UCB warms up by forcing each index
    once, in order, then plays the highest mean-plus-bonus score with
    ties going to the smallest index.
    """
    if t < 1:
        raise ValueError("time starts at 1")
    if n < 1:
        raise ValueError("need at least one index")
    if mode == "round_robin":
        return (t - 1) % n
    if mode != "ucb":
        raise ValueError(f"unknown scheduling mode {mode!r}")
    if stats is None:
        raise ValueError("ucb scheduling needs UCBStats")
    if stats.n != n:
        raise ValueError(f"stats cover {stats.n} indices, expected {n}")
    cold = np.flatnonzero(stats.counts == 0)
    if cold.size:
        return int(cold[0])
    return int(np.argmax(stats.scores()))
