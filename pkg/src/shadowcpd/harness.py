"""Scenario configuration and seeded Monte Carlo detection runs.

A scenario pins down the state stream (pre- and post-change mixing
angles and the changepoint), the measurement policy (shadow-based
universal detection or matched projective baselines), the betting
policy, and the detector.  Trials are deterministic functions of
(scenario, seed); experiments derive per-run seeds from a master seed
so results are independent of execution order and parallelism.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .betting import (
    CBCEBettor,
    ConstantBettor,
    UP_GRID_SIZE,
    default_slack,
    estimate_growth_rate,
    lambda_interval,
)
from .edetect import CUSUM, DetectorConfig, SR, SequentialDetector, uniform_weights
from .matched import ProjectiveMeasurement, UCBStats, UCB_DEFAULT_DELTA, select_index
from .qcore import DensityMatrix, Observable, make_theta_state, rotated_observable
from .shadows import (
    MAX_JOINT_QUBITS,
    MAX_LOCAL_QUBITS,
    can_enumerate,
    estimator_bounds,
    outcome_distribution,
    sample_estimates,
)

POLICIES = ("escd", "emcd_rr", "emcd_ucb")
ENSEMBLES = ("local", "joint")
BOUNDS_MODES = ("auto", "analytic", "exhaustive")

_SCENARIO_KEYS = (
    "d",
    "ensemble",
    "observables",
    "theta0",
    "theta1",
    "nu",
    "alpha",
    "detector",
    "weights",
    "betting",
    "policy",
    "run_cap",
    "bounds_mode",
)
_REQUIRED_KEYS = ("d", "ensemble", "observables", "theta0", "theta1", "nu", "alpha", "policy")

CSV_COLUMNS = (
    "run_index",
    "seed",
    "policy",
    "d",
    "ensemble",
    "n_observables",
    "theta0",
    "theta1",
    "nu",
    "alpha",
    "detector",
    "stop_time",
    "censored",
    "false_alarm",
    "delay",
)

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


class ScenarioError(ValueError):
    """Scenario validation failure; the message names the offending field."""


def _fail(path, msg):
    raise ScenarioError(f"{path}: {msg}")


def _require(cond, path, msg):
    if not cond:
        _fail(path, msg)


@dataclass(frozen=True)
class Scenario:
    """Complete description of one detection experiment."""

    d: int
    ensemble: str
    observables: dict
    theta0: float
    theta1: float
    nu: int | None
    alpha: float
    policy: str
    detector: str = SR
    weights: object = "uniform"
    betting: dict = field(default_factory=lambda: {"cbce": {}})
    run_cap: int | None = None
    bounds_mode: str = "auto"
    ucb_delta: float = UCB_DEFAULT_DELTA

    def __post_init__(self):
        _require(isinstance(self.d, int) and self.d >= 1, "scenario.d", "must be an integer >= 1")
        _require(self.ensemble in ENSEMBLES, "scenario.ensemble", f"must be one of {ENSEMBLES}")
        if self.ensemble == "local":
            _require(self.d <= MAX_LOCAL_QUBITS, "scenario.d", f"local ensemble supports d <= {MAX_LOCAL_QUBITS}")
        else:
            _require(self.d <= MAX_JOINT_QUBITS, "scenario.d", f"joint ensemble supports d <= {MAX_JOINT_QUBITS}")
        self._validate_observables()
        _require(-1.0 <= self.theta0 <= 0.0, "scenario.theta0",
                 "pre-change mixing angle must lie in [-1, 0]")
        _require(-1.0 <= self.theta1 <= 1.0, "scenario.theta1", "mixing angle must lie in [-1, 1]")
        if self.nu is not None:
            _require(isinstance(self.nu, int) and self.nu >= 1, "scenario.nu",
                     "changepoint must be an integer >= 1 or null for never")
            _require(self.theta1 > 0.0, "scenario.theta1",
                     "post-change mixing angle must be > 0 when the changepoint is finite")
        _require(isinstance(self.alpha, float) and 0.0 < self.alpha < 1.0,
                 "scenario.alpha", "must be a real in (0, 1)")
        _require(self.policy in POLICIES, "scenario.policy", f"must be one of {POLICIES}")
        _require(self.detector in (SR, CUSUM), "scenario.detector", f"must be {SR!r} or {CUSUM!r}")
        self._validate_weights()
        self._validate_betting()
        if self.run_cap is None:
            object.__setattr__(self, "run_cap", 20 * math.ceil(1.0 / self.alpha))
        _require(isinstance(self.run_cap, int) and self.run_cap >= math.ceil(1.0 / self.alpha),
                 "scenario.run_cap", "must be an integer >= ceil(1/alpha)")
        _require(self.bounds_mode in BOUNDS_MODES, "scenario.bounds_mode",
                 f"must be one of {BOUNDS_MODES}")
        _require(isinstance(self.ucb_delta, float) and 0.0 < self.ucb_delta < 1.0,
                 "scenario.ucb_delta", "must be a real in (0, 1)")

    def _validate_observables(self):
        obs = self.observables
        _require(isinstance(obs, dict) and len(obs) == 1, "scenario.observables",
                 'must be {"rotated": n} or {"matrices": [...]}')
        key = next(iter(obs))
        if key == "rotated":
            _require(isinstance(obs["rotated"], int) and obs["rotated"] >= 1,
                     "scenario.observables.rotated", "must be an integer >= 1")
        elif key == "matrices":
            mats = obs["matrices"]
            _require(isinstance(mats, (list, tuple)) and len(mats) >= 1,
                     "scenario.observables.matrices", "must be a nonempty list")
            for j, m in enumerate(mats):
                _parse_matrix(m, self.d, f"scenario.observables.matrices[{j}]")
        else:
            _fail(f"scenario.observables.{key}", "unknown observable rule")

    def _validate_weights(self):
        w = self.weights
        if w == "uniform":
            return
        _require(isinstance(w, (list, tuple)), "scenario.weights",
                 'must be "uniform" or a list of positive reals')
        _require(len(w) == self.n_observables, "scenario.weights",
                 f"length {len(w)} does not match {self.n_observables} observables")
        _require(all(isinstance(x, (int, float)) and x > 0 for x in w), "scenario.weights",
                 "entries must be positive reals")
        _require(abs(sum(float(x) for x in w) - 1.0) <= 1e-12, "scenario.weights",
                 "entries must sum to 1")
        object.__setattr__(self, "weights", tuple(float(x) for x in w))

    def _validate_betting(self):
        b = self.betting
        _require(isinstance(b, dict) and len(b) == 1, "scenario.betting",
                 'must be {"cbce": {...}} or {"constant": lambda}')
        key = next(iter(b))
        if key == "cbce":
            cfg = b["cbce"]
            _require(isinstance(cfg, dict), "scenario.betting.cbce", "must be an object")
            for k in cfg:
                _require(k in ("grid", "slack", "two_sided"), f"scenario.betting.cbce.{k}",
                         "unknown field")
            grid = cfg.get("grid", UP_GRID_SIZE)
            _require(isinstance(grid, int) and grid >= 2, "scenario.betting.cbce.grid",
                     "must be an integer >= 2")
            slack = cfg.get("slack")
            if slack is not None:
                _require(isinstance(slack, (int, float)) and slack >= 0.0,
                         "scenario.betting.cbce.slack", "must be a nonnegative real or null")
            _require(isinstance(cfg.get("two_sided", False), bool),
                     "scenario.betting.cbce.two_sided", "must be a boolean")
            canonical = {"cbce": {
                "grid": grid,
                "slack": float(slack) if slack is not None else None,
                "two_sided": cfg.get("two_sided", False),
            }}
        elif key == "constant":
            _require(isinstance(b["constant"], (int, float)), "scenario.betting.constant",
                     "must be a real bet")
            canonical = {"constant": float(b["constant"])}
        else:
            _fail(f"scenario.betting.{key}", "unknown betting policy")
        # defaults filled in so to_dict round-trips exactly
        object.__setattr__(self, "betting", canonical)

    @property
    def n_observables(self) -> int:
        if "rotated" in self.observables:
            return self.observables["rotated"]
        return len(self.observables["matrices"])

    def to_dict(self) -> dict:
        policy = self.policy
        if policy == "emcd_ucb":
            policy = {"emcd_ucb": {"delta": self.ucb_delta}}
        weights = self.weights if self.weights == "uniform" else list(self.weights)
        return {
            "d": self.d,
            "ensemble": self.ensemble,
            "observables": _copy_jsonish(self.observables),
            "theta0": self.theta0,
            "theta1": self.theta1,
            "nu": self.nu,
            "alpha": self.alpha,
            "detector": self.detector,
            "weights": weights,
            "betting": _copy_jsonish(self.betting),
            "policy": policy,
            "run_cap": self.run_cap,
            "bounds_mode": self.bounds_mode,
        }

    @staticmethod
    def from_dict(data: dict) -> "Scenario":
        _require(isinstance(data, dict), "scenario", "must be a JSON object")
        for key in data:
            _require(key in _SCENARIO_KEYS, f"scenario.{key}", "unknown field")
        for key in _REQUIRED_KEYS:
            _require(key in data, f"scenario.{key}", "missing required field")
        policy = data["policy"]
        ucb_delta = UCB_DEFAULT_DELTA
        if isinstance(policy, dict):
            _require(len(policy) == 1 and "emcd_ucb" in policy, "scenario.policy",
                     'object form must be {"emcd_ucb": {"delta": ...}}')
            cfg = policy["emcd_ucb"]
            _require(isinstance(cfg, dict), "scenario.policy.emcd_ucb", "must be an object")
            for k in cfg:
                _require(k == "delta", f"scenario.policy.emcd_ucb.{k}", "unknown field")
            if "delta" in cfg:
                _require(isinstance(cfg["delta"], (int, float)), "scenario.policy.emcd_ucb.delta",
                         "must be a real")
                ucb_delta = float(cfg["delta"])
            policy = "emcd_ucb"
        nu = data["nu"]
        kwargs = {
            "d": data["d"],
            "ensemble": data["ensemble"],
            "observables": _copy_jsonish(data["observables"]),
            "theta0": float(data["theta0"]) if isinstance(data["theta0"], (int, float)) else data["theta0"],
            "theta1": float(data["theta1"]) if isinstance(data["theta1"], (int, float)) else data["theta1"],
            "nu": nu,
            "alpha": float(data["alpha"]) if isinstance(data["alpha"], (int, float)) else data["alpha"],
            "policy": policy,
            "ucb_delta": ucb_delta,
        }
        if "detector" in data:
            kwargs["detector"] = data["detector"]
        if "weights" in data:
            kwargs["weights"] = data["weights"]
        if "betting" in data:
            kwargs["betting"] = _copy_jsonish(data["betting"])
        if "run_cap" in data:
            kwargs["run_cap"] = data["run_cap"]
        if "bounds_mode" in data:
            kwargs["bounds_mode"] = data["bounds_mode"]
        return Scenario(**kwargs)


def _copy_jsonish(obj):
    if isinstance(obj, dict):
        return {k: _copy_jsonish(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_copy_jsonish(v) for v in obj]
    return obj


def _parse_matrix(entry, d, path):
    dim = 1 << d
    _require(isinstance(entry, (list, tuple)) and len(entry) == dim, path,
             f"must be a {dim}x{dim} matrix (list of rows)")
    out = np.zeros((dim, dim), dtype=complex)
    for r, row in enumerate(entry):
        _require(isinstance(row, (list, tuple)) and len(row) == dim, f"{path}[{r}]",
                 f"must be a row of {dim} entries")
        for c, cell in enumerate(row):
            if isinstance(cell, (int, float)):
                out[r, c] = float(cell)
            elif isinstance(cell, (list, tuple)) and len(cell) == 2 \
                    and all(isinstance(x, (int, float)) for x in cell):
                out[r, c] = complex(float(cell[0]), float(cell[1]))
            else:
                _fail(f"{path}[{r}][{c}]", "must be a real or an [re, im] pair")
    if np.abs(out - out.conj().T).max() > 1e-10:
        _fail(path, "must be Hermitian within 1e-10")
    return out


def build_observables(scenario: Scenario):
    """Materialize the scenario's observables as Observable objects."""
    if "rotated" in scenario.observables:
        n = scenario.observables["rotated"]
        return [rotated_observable(scenario.d, math.pi * i / (2 * n)) for i in range(n)]
    mats = scenario.observables["matrices"]
    out = []
    for j, m in enumerate(mats):
        arr = _parse_matrix(m, scenario.d, f"scenario.observables.matrices[{j}]")
        try:
            out.append(Observable(arr))
        except ValueError as exc:
            _fail(f"scenario.observables.matrices[{j}]", str(exc))
    return out


# ---------------------------------------------------------------------------
# per-trial machinery


class _TableSampler:
    """Draws estimate vectors from a finite enumerated outcome distribution."""

    def __init__(self, probs, values):
        cum = np.cumsum(probs)
        cum[-1] = 1.0
        self.cum = cum
        self.values = values

    def draw(self, rng):
        a = int(np.searchsorted(self.cum, rng.random(), side="right"))
        if a >= self.values.shape[0]:
            a = self.values.shape[0] - 1
        return self.values[a]


class _DirectSampler:
    """Fresh shadow measurement per draw; for non-enumerable configurations."""

    def __init__(self, rho, observables, kind):
        self.rho = rho
        self.observables = observables
        self.kind = kind

    def draw(self, rng):
        return sample_estimates(self.rho, self.observables, self.kind, rng)


class _EigenTable:
    # eigenvalue outcomes with Born weights for one (observable, state) pair
    def __init__(self, pm: ProjectiveMeasurement, rho: DensityMatrix):
        probs = np.einsum("xi,ij,xj->x", pm._bras, rho.mat, pm._bras.conj(), optimize=True).real
        probs = np.clip(probs, 0.0, None)
        cum = np.cumsum(probs / probs.sum())
        cum[-1] = 1.0
        self.cum = cum
        self.values = pm.outcome_values

    def draw(self, rng):
        a = int(np.searchsorted(self.cum, rng.random(), side="right"))
        if a >= self.values.size:
            a = self.values.size - 1
        return float(self.values[a])


class ScenarioRuntime:
    """Everything shared across a scenario's trials: observables, bounds,
    betting intervals, detector config, and outcome samplers."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        sc = scenario
        self.observables = build_observables(sc)
        self.n = len(self.observables)
        weights = uniform_weights(self.n) if sc.weights == "uniform" else tuple(sc.weights)
        self.detector_config = DetectorConfig(weights=weights, alpha=sc.alpha, kind=sc.detector)
        self.pre_state = make_theta_state(sc.d, sc.theta0)
        self.post_state = make_theta_state(sc.d, sc.theta1) if sc.nu is not None else None

        enumerable = can_enumerate(sc.ensemble, sc.d)
        mode = sc.bounds_mode
        if mode == "auto":
            mode = "exhaustive" if enumerable else "analytic"
        elif mode == "exhaustive" and not enumerable:
            _fail("scenario.bounds_mode",
                  f"exhaustive bounds are not enumerable for ensemble={sc.ensemble!r}, d={sc.d}")
        self.bounds_mode = mode

        cfg = sc.betting.get("cbce", {})
        self.bet_grid = cfg.get("grid", UP_GRID_SIZE)
        slack = cfg.get("slack")
        two_sided = cfg.get("two_sided", False)

        if sc.policy == "escd":
            bounds = [estimator_bounds(o, sc.ensemble, mode=self.bounds_mode)
                      for o in self.observables]
            self.o_bounds = [(b.lower, b.upper) for b in bounds]
            if enumerable:
                probs0, vals0 = outcome_distribution(self.pre_state, self.observables, sc.ensemble)
                self.pre_sampler = _TableSampler(probs0, vals0)
                if self.post_state is not None:
                    probs1, vals1 = outcome_distribution(self.post_state, self.observables, sc.ensemble)
                    self.post_sampler = _TableSampler(probs1, vals1)
                else:
                    self.post_sampler = None
            else:
                self.pre_sampler = _DirectSampler(self.pre_state, self.observables, sc.ensemble)
                self.post_sampler = (
                    _DirectSampler(self.post_state, self.observables, sc.ensemble)
                    if self.post_state is not None else None
                )
            self.measurements = None
            self.pre_tables = self.post_tables = None
        else:
            self.measurements = [ProjectiveMeasurement(o) for o in self.observables]
            self.o_bounds = [(o.eigmin, o.eigmax) for o in self.observables]
            self.pre_tables = [_EigenTable(pm, self.pre_state) for pm in self.measurements]
            self.post_tables = (
                [_EigenTable(pm, self.post_state) for pm in self.measurements]
                if self.post_state is not None else None
            )
            self.pre_sampler = self.post_sampler = None

        self.full_intervals = [lambda_interval(b, slack) for b in self.o_bounds]
        if two_sided:
            self.bet_intervals = self.full_intervals
        else:
            self.bet_intervals = [iv.nonnegative() for iv in self.full_intervals]
        if "constant" in sc.betting:
            lam = float(sc.betting["constant"])
            for i, iv in enumerate(self.full_intervals):
                if not iv.contains(lam):
                    _fail("scenario.betting.constant",
                          f"bet {lam!r} outside the admissible interval "
                          f"[{iv.lo!r}, {iv.hi!r}] of observable {i}")

    def make_bettor(self, i: int):
        if "constant" in self.scenario.betting:
            return ConstantBettor(float(self.scenario.betting["constant"]))
        return CBCEBettor(self.bet_intervals[i], self.o_bounds[i], k=self.bet_grid)


@dataclass(frozen=True)
class TrialResult:
    """Outcome of one detection run."""

    run_index: int
    seed: int
    stop_time: int
    censored: bool
    false_alarm: bool
    delay: int | None
    nu: int | None

    def classification(self) -> str:
        if self.censored:
            return "censored"
        if self.nu is None:
            return "nu_infinite"
        if self.false_alarm:
            return "false_alarm"
        return "delay"


def splitmix64(x: int) -> int:
    """One avalanche round of the splitmix64 finalizer."""
    z = x & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(master_seed: int, run_index: int) -> int:
    """Counter-based per-run seed: position run_index+1 of the splitmix64
    stream started at master_seed."""
    return splitmix64((master_seed + (run_index + 1) * _GOLDEN) & _MASK64)


def run_trial(scenario: Scenario, seed: int, run_index: int = 0,
              runtime: ScenarioRuntime | None = None) -> TrialResult:
    """One full detection run; deterministic in (scenario, seed)."""
    rt = runtime if runtime is not None else ScenarioRuntime(scenario)
    sc = scenario
    rng = np.random.default_rng(seed)
    detector = SequentialDetector(rt.detector_config)
    n = rt.n
    stop_at = None

    if sc.policy == "escd":
        bettors = [rt.make_bettor(i) for i in range(n)]
        prev = [None] * n
        lams = np.empty(n)
        for t in range(1, sc.run_cap + 1):
            post = sc.nu is not None and t >= sc.nu
            sampler = rt.post_sampler if post else rt.pre_sampler
            for i in range(n):
                lams[i] = bettors[i].step(prev[i])
            ests = sampler.draw(rng)
            if detector.advance(1.0 + lams * ests):
                stop_at = t
                break
            prev = ests
    else:
        ucb = sc.policy == "emcd_ucb"
        stats = UCBStats(n, sc.ucb_delta) if ucb else None
        mode = "ucb" if ucb else "round_robin"
        bettors = [rt.make_bettor(i) for i in range(n)]
        prev = [None] * n
        for t in range(1, sc.run_cap + 1):
            post = sc.nu is not None and t >= sc.nu
            tables = rt.post_tables if post else rt.pre_tables
            idx = select_index(mode, t, n, stats)
            lam = bettors[idx].step(prev[idx])
            outcome = tables[idx].draw(rng)
            incr = 1.0 + lam * outcome
            if ucb:
                stats.record(idx, incr)
            row = [None] * n
            row[idx] = incr
            stopped = detector.advance(row)
            prev[idx] = outcome
            if stopped:
                stop_at = t
                break

    censored = stop_at is None
    stop_time = sc.run_cap if censored else stop_at
    false_alarm = sc.nu is not None and not censored and stop_time < sc.nu
    delay = (stop_time - sc.nu
             if sc.nu is not None and not censored and stop_time >= sc.nu else None)
    return TrialResult(
        run_index=run_index,
        seed=seed,
        stop_time=stop_time,
        censored=censored,
        false_alarm=false_alarm,
        delay=delay,
        nu=sc.nu,
    )


def _run_chunk(scenario: Scenario, pairs):
    rt = ScenarioRuntime(scenario)
    return [run_trial(scenario, seed, idx, rt) for idx, seed in pairs]


def run_experiment(scenario: Scenario, runs: int, master_seed: int,
                   parallelism: int = 1):
    """Seeded batch of trials, ordered by run index, parallelism-invariant."""
    if runs < 1:
        raise ValueError("runs must be >= 1")
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    pairs = [(i, derive_seed(master_seed, i)) for i in range(runs)]
    if parallelism == 1:
        return _run_chunk(scenario, pairs)
    per = math.ceil(runs / parallelism)
    chunks = [pairs[i:i + per] for i in range(0, runs, per)]
    results = []
    with ProcessPoolExecutor(max_workers=parallelism) as pool:
        futures = [pool.submit(_run_chunk, scenario, chunk) for chunk in chunks]
        for fut in futures:
            results.extend(fut.result())
    return results


# ---------------------------------------------------------------------------
# metrics and emission


@dataclass(frozen=True)
class SummaryStats:
    """Aggregate run-length and delay metrics for one experiment."""

    runs: int
    mean_run_length: float
    mean_delay: float | None
    delay_quantiles: dict | None
    false_alarm_fraction: float
    censored_fraction: float
    d_star_reference: float | None

    def to_dict(self) -> dict:
        return {
            "runs": self.runs,
            "mean_run_length": self.mean_run_length,
            "mean_delay": self.mean_delay,
            "delay_quantiles": self.delay_quantiles,
            "false_alarm_fraction": self.false_alarm_fraction,
            "censored_fraction": self.censored_fraction,
            "d_star_reference": self.d_star_reference,
        }


def _growth_reference(scenario: Scenario) -> float | None:
    if scenario.nu is None:
        return None
    if scenario.policy == "escd":
        if not can_enumerate(scenario.ensemble, scenario.d):
            return None
        rho1 = make_theta_state(scenario.d, scenario.theta1)
        cfg = scenario.betting.get("cbce", {})
        est = estimate_growth_rate(
            rho1, build_observables(scenario), scenario.ensemble,
            slack=cfg.get("slack"), bounds_mode=scenario.bounds_mode,
        )
        return est.d_star
    # matched measurements: exact eigenvalue-outcome distribution per observable
    rho1 = make_theta_state(scenario.d, scenario.theta1)
    best = None
    for obs in build_observables(scenario):
        pm = ProjectiveMeasurement(obs)
        probs = np.einsum("xi,ij,xj->x", pm._bras, rho1.mat, pm._bras.conj(), optimize=True).real
        probs = np.clip(probs, 0.0, None)
        probs = probs / probs.sum()
        try:
            iv = lambda_interval((obs.eigmin, obs.eigmax))
        except ValueError:
            return None
        grid = np.linspace(iv.lo, iv.hi, 201)
        grid[np.abs(grid).argmin()] = 0.0
        curve = probs @ np.log1p(pm.outcome_values[:, None] * grid[None, :])
        cand = float(curve.max())
        best = cand if best is None or cand > best else best
    return best


def summarize(results, scenario: Scenario | None = None,
              include_growth: bool = True) -> SummaryStats:
    """Aggregate metrics; censored runs count at the cap in mean_run_length."""
    if len(results) == 0:
        raise ValueError("cannot summarize zero trials")
    stop_times = np.array([r.stop_time for r in results], dtype=float)
    delays = np.array([r.delay for r in results if r.delay is not None], dtype=float)
    if delays.size:
        qs = np.percentile(delays, [10, 25, 50, 75, 90])
        quantiles = {f"q{p}": float(v) for p, v in zip((10, 25, 50, 75, 90), qs)}
        mean_delay = float(delays.mean())
    else:
        quantiles = None
        mean_delay = None
    d_star = _growth_reference(scenario) if (scenario is not None and include_growth) else None
    return SummaryStats(
        runs=len(results),
        mean_run_length=float(stop_times.mean()),
        mean_delay=mean_delay,
        delay_quantiles=quantiles,
        false_alarm_fraction=sum(r.false_alarm for r in results) / len(results),
        censored_fraction=sum(r.censored for r in results) / len(results),
        d_star_reference=d_star,
    )


def _fmt_float(x: float) -> str:
    return f"{x:.12g}"


def _normalize_floats(obj):
    if isinstance(obj, float):
        return float(_fmt_float(obj))
    if isinstance(obj, dict):
        return {k: _normalize_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_normalize_floats(v) for v in obj]
    return obj


def trial_to_dict(r: TrialResult) -> dict:
    return {
        "run_index": r.run_index,
        "seed": r.seed,
        "stop_time": r.stop_time,
        "censored": r.censored,
        "false_alarm": r.false_alarm,
        "delay": r.delay,
        "nu": r.nu,
    }


def trial_from_dict(data: dict) -> TrialResult:
    return TrialResult(
        run_index=data["run_index"],
        seed=data["seed"],
        stop_time=data["stop_time"],
        censored=data["censored"],
        false_alarm=data["false_alarm"],
        delay=data["delay"],
        nu=data["nu"],
    )


def results_csv(scenario: Scenario, results) -> str:
    """CSV text for a batch of trials (LF endings, 12 significant digits)."""
    sc = scenario
    rows = [",".join(CSV_COLUMNS)]
    shared = (
        sc.policy,
        str(sc.d),
        sc.ensemble,
        str(sc.n_observables),
        _fmt_float(sc.theta0),
        _fmt_float(sc.theta1),
        "inf" if sc.nu is None else str(sc.nu),
        _fmt_float(sc.alpha),
        sc.detector,
    )
    for r in results:
        rows.append(",".join((
            str(r.run_index),
            str(r.seed),
            *shared,
            str(r.stop_time),
            "true" if r.censored else "false",
            "true" if r.false_alarm else "false",
            "" if r.delay is None else str(r.delay),
        )))
    return "\n".join(rows) + "\n"


def results_json(scenario: Scenario, results, stats: SummaryStats,
                 master_seed: int | None = None,
                 wall_time_seconds: float | None = None) -> str:
    doc = {
        "scenario": scenario.to_dict(),
        "trials": [trial_to_dict(r) for r in results],
        "summary": stats.to_dict(),
        "meta": {
            "version": __version__,
            "master_seed": master_seed,
            "wall_time_seconds": wall_time_seconds,
        },
    }
    return json.dumps(_normalize_floats(doc), indent=2) + "\n"


def emit_results(scenario: Scenario, results, stats: SummaryStats, fmt: str,
                 path, master_seed: int | None = None,
                 wall_time_seconds: float | None = None) -> None:
    """Write trials (and, for JSON, the summary) to a file."""
    if fmt == "csv":
        text = results_csv(scenario, results)
    elif fmt == "json":
        text = results_json(scenario, results, stats, master_seed, wall_time_seconds)
    else:
        raise ValueError(f"unknown output format {fmt!r}")
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# presets mirroring the reference experiments


def _base_preset(**overrides) -> dict:
    base = {
        "d": 2,
        "ensemble": "local",
        "observables": {"rotated": 1},
        "theta0": -0.5,
        "theta1": 1.0,
        "nu": None,
        "alpha": 1e-3,
        "detector": SR,
        "weights": "uniform",
        "betting": {"cbce": {}},
        "policy": "escd",
        "run_cap": 5000,
        "bounds_mode": "auto",
    }
    base.update(overrides)
    return base


_PRESETS = {
    # ARL under the null: theta0 is the sweep axis
    "fig3-left": _base_preset(),
    # delay versus post-change angle: theta1 is the sweep axis
    "fig3-right": _base_preset(nu=200),
    # observable-count crossover: observables.rotated is the sweep axis
    "fig4": _base_preset(nu=200, observables={"rotated": 8}),
    # measurement-ensemble gap at d=3: ensemble is the comparison axis
    "fig5": _base_preset(nu=200, d=3, theta1=0.8),
}
for _name in list(_PRESETS):
    _PRESETS["desk-" + _name] = dict(_PRESETS[_name], alpha=1e-2, run_cap=2000)


def preset_names():
    return tuple(_PRESETS)

def preset_scenario(name: str) -> Scenario:
    """A ready-made scenario; desk-* variants run at 1/alpha = 100, cap 2000."""
    if name not in _PRESETS:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(_PRESETS)}")
    return Scenario.from_dict(_copy_jsonish(_PRESETS[name]))
