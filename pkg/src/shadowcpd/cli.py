"""Command-line front end: run experiments, sweep parameters, print presets,
validate the measurement-channel oracles, and report growth rates.

Exit codes: 0 on success, 1 when validation fails, 2 on bad input.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time

import numpy as np

from . import __version__, betting, harness, qcore, shadows


class SystemExit2(Exception):
    """Bad input; converted to exit code 2 at the top level."""


def _load_scenario(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise SystemExit2(f"cannot read scenario {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise SystemExit2(f"scenario {path} is not valid JSON: {exc}")
    try:
        return harness.Scenario.from_dict(data)
    except harness.ScenarioError as exc:
        raise SystemExit2(str(exc))


def _cmd_run(args):
    scenario = _load_scenario(args.scenario)
    t0 = time.perf_counter()
    results = harness.run_experiment(scenario, args.runs, args.seed, args.parallelism)
    wall = time.perf_counter() - t0
    stats = harness.summarize(results, scenario)
    if args.out:
        harness.emit_results(scenario, results, stats, args.format, args.out,
                             master_seed=args.seed, wall_time_seconds=wall)
        print(f"wrote {len(results)} trials to {args.out}")
    else:
        if args.format == "csv":
            sys.stdout.write(harness.results_csv(scenario, results))
        else:
            sys.stdout.write(harness.results_json(scenario, results, stats,
                                                  master_seed=args.seed,
                                                  wall_time_seconds=wall))
    summary = stats.to_dict()
    summary["wall_time_seconds"] = wall
    print(json.dumps(harness._normalize_floats(summary)), file=sys.stderr)
    return 0


def _set_path(data, dotted, value):
    keys = dotted.split(".")
    node = data
    for k in keys[:-1]:
        if not isinstance(node, dict) or k not in node:
            raise SystemExit2(f"scenario has no field {dotted!r}")
        node = node[k]
    if not isinstance(node, dict) or keys[-1] not in node:
        raise SystemExit2(f"scenario has no field {dotted!r}")
    node[keys[-1]] = value


def _cmd_sweep(args):
    base = _load_scenario(args.scenario).to_dict()
    try:
        values = [json.loads(v) for v in args.values.split(",")]
    except json.JSONDecodeError as exc:
        raise SystemExit2(f"cannot parse sweep values {args.values!r}: {exc}")
    header = [
        "param", "value", "runs", "mean_run_length", "mean_delay",
        "delay_q10", "delay_q25", "delay_q50", "delay_q75", "delay_q90",
        "false_alarm_fraction", "censored_fraction", "d_star_reference",
    ]
    lines = [",".join(header)]
    for value in values:
        data = harness._copy_jsonish(base)
        _set_path(data, args.param, value)
        try:
            scenario = harness.Scenario.from_dict(data)
        except harness.ScenarioError as exc:
            raise SystemExit2(f"sweep value {value!r}: {exc}")
        results = harness.run_experiment(scenario, args.runs, args.seed, args.parallelism)
        stats = harness.summarize(results, scenario)
        qs = stats.delay_quantiles or {}
        row = [
            args.param,
            json.dumps(value),
            str(stats.runs),
            harness._fmt_float(stats.mean_run_length),
            "" if stats.mean_delay is None else harness._fmt_float(stats.mean_delay),
            *("" if not qs else harness._fmt_float(qs[f"q{p}"]) for p in (10, 25, 50, 75, 90)),
            harness._fmt_float(stats.false_alarm_fraction),
            harness._fmt_float(stats.censored_fraction),
            "" if stats.d_star_reference is None else harness._fmt_float(stats.d_star_reference),
        ]
        lines.append(",".join(row))
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        print(f"wrote {len(values)} sweep rows to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_preset(args):
    if args.list:
        for name in harness.preset_names():
            print(name)
        return 0
    if not args.name:
        raise SystemExit2("preset requires --name or --list")
    try:
        scenario = harness.preset_scenario(args.name)
    except KeyError as exc:
        raise SystemExit2(str(exc.args[0]))
    text = json.dumps(scenario.to_dict(), indent=2) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        print(f"wrote preset {args.name} to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_validate(args):
    rng = np.random.default_rng(20240817)
    failures = 0

    def check(name, ok):
        nonlocal failures
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
        if not ok:
            failures += 1

    # measurement channel reproduces the per-qubit depolarizing map exactly
    for d in (1, 2):
        rho = qcore.make_theta_state(d, -0.37)
        out = shadows.exact_channel_apply(rho, "local")
        target = _exact_local_channel(rho.mat, d)
        err = float(np.abs(out - target).max())
        check(f"local channel enumeration d={d} (err {err:.2e})", err <= 1e-10)
    rho = qcore.make_theta_state(1, 0.61)
    out = shadows.exact_channel_apply(rho, "joint")
    err = float(np.abs(out - (rho.mat + np.eye(2)) / 3.0).max())
    check(f"joint channel enumeration d=1 (err {err:.2e})", err <= 1e-10)

    # estimates always inside exhaustive bounds
    obs = qcore.rotated_observable(2, 0.0)
    bounds = shadows.estimator_bounds(obs, "local", mode="exhaustive")
    rho2 = qcore.make_theta_state(2, 0.4)
    worst = 0.0
    for _ in range(2000):
        o = shadows.sample_estimates(rho2, [obs], "local", rng)[0]
        worst = max(worst, bounds.lower - o, o - bounds.upper)
    check(f"estimates within exhaustive bounds (excess {worst:.2e})", worst <= 0.0)

    # covering intervals
    ok = all(
        len(betting.covering_intervals(t)) == int(math.floor(math.log2(t))) + 1
        for t in range(1, 10_001)
    )
    check("covering-interval cardinality up to 10^4", ok)

    return 1 if failures else 0


def _exact_local_channel(mat, d):
    # independent oracle: the local-ensemble channel factorizes per qubit as
    # rho -> (rho + I_k (x) Tr_k rho)/3
    out = mat.astype(complex)
    for k in range(d):
        out = _apply_single_qubit_channel(out, k, d)
    return out


def _apply_single_qubit_channel(mat, k, d):
    dim = 1 << d
    t = mat.reshape((1 << k, 2, 1 << (d - 1 - k)) * 2)
    tr = np.trace(t, axis1=1, axis2=4)
    lifted = np.einsum("ab,ikjl->iakjbl", np.eye(2), tr).reshape(dim, dim)
    return (mat + lifted) / 3.0


def _cmd_growth(args):
    scenario = _load_scenario(args.scenario)
    if scenario.nu is None:
        raise SystemExit2("growth requires a scenario with a finite changepoint (post-change state)")
    rho1 = qcore.make_theta_state(scenario.d, scenario.theta1)
    observables = harness.build_observables(scenario)
    est = betting.estimate_growth_rate(
        rho1, observables, scenario.ensemble,
        shots=args.shots, rng=args.seed, bounds_mode=scenario.bounds_mode,
    )
    doc = {
        "d_star": est.d_star,
        "i_star": est.i_star,
        "lambda_star": est.lambda_star,
        "per_observable": list(est.per_observable),
    }
    print(json.dumps(harness._normalize_floats(doc), indent=2))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="shadowcpd",
        description="sequential quantum changepoint detection experiments",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario and emit trial results")
    p_run.add_argument("--scenario", required=True)
    p_run.add_argument("--runs", type=int, default=100)
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--parallelism", type=int, default=1)
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--format", choices=("csv", "json"), default="csv")
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="rerun a scenario across parameter values")
    p_sweep.add_argument("--scenario", required=True)
    p_sweep.add_argument("--param", required=True, help="dotted field path, e.g. theta1")
    p_sweep.add_argument("--values", required=True, help="comma-separated JSON values")
    p_sweep.add_argument("--runs", type=int, default=100)
    p_sweep.add_argument("--seed", type=int, default=0)
    p_sweep.add_argument("--parallelism", type=int, default=1)
    p_sweep.add_argument("--out", default=None)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_preset = sub.add_parser("preset", help="print a ready-made scenario as JSON")
    p_preset.add_argument("--name", default=None)
    p_preset.add_argument("--list", action="store_true")
    p_preset.add_argument("--out", default=None)
    p_preset.set_defaults(func=_cmd_preset)

    p_val = sub.add_parser("validate", help="run the enumeration-oracle invariant suite")
    p_val.set_defaults(func=_cmd_validate)

    p_growth = sub.add_parser("growth", help="print the growth-rate estimate for a scenario")
    p_growth.add_argument("--scenario", required=True)
    p_growth.add_argument("--shots", type=int, default=betting.GROWTH_SHOTS)
    p_growth.add_argument("--seed", type=int, default=0)
    p_growth.set_defaults(func=_cmd_growth)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SystemExit2 as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
