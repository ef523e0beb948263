"""Command-line front end: run scenarios, sweep parameters, verify bounds.

Exit codes: 0 success, 2 configuration error, 3 solver failure during a
run, 4 safety/deadline/bound failure.  Outputs are plain CSV and JSON so
they can be diffed and plotted with external tools.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from fxtqp.fxts import FxtsGains, RegimeKind, settling_time_bound, simulate_scalar_v
from fxtqp.simulation import OutcomeKind, monitor, trace_to_csv
from fxtqp.scenarios import scenario_from_id

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_VIOLATION = 4

DEFAULT_BOUNDS_GRID = {
    "alpha": [0.5, 1.0, 2.0],
    "mu": [2.0, 5.0],
    "delta1": [-1.0, 0.0, 1.0, 1.9, 2.5],
    "V0": [0.01, 1.0, 100.0],
    "dt": 1e-4,
}


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _parse_overrides(pairs):
    overrides = {}
    for item in pairs or []:
        if "=" not in item:
            raise ValueError(f"--set expects key=value, got {item!r}")
        key, _, value = item.partition("=")
        overrides[key.strip()] = _parse_value(value.strip())
    return overrides


def _out_dir(args) -> Path:
    root = args.out or os.environ.get("FXTQP_OUT") or "fxtqp-out"
    path = Path(root)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _outcome_exit_code(outcome) -> int:
    if outcome.kind is OutcomeKind.ALL_PHASES_MET:
        return EXIT_OK
    if outcome.kind is OutcomeKind.SOLVER_FAILURE:
        return EXIT_SOLVER
    return EXIT_VIOLATION


def _fixed_time_certificate(trace, scenario) -> dict | None:
    """Run-level convergence certificate from the worst observed slack.

    The per-step predicted time is advisory; the certificate that holds for
    the whole run uses the supremum of delta1 over the visited states, and
    is domain-restricted (checked against the initial goal value) once that
    supremum reaches the critical threshold.
    """
    if len(trace) == 0:
        return None
    delta1_sup = float(np.max(trace.delta1))
    bound = settling_time_bound(scenario.params.gains, max(0.0, delta1_sup),
                                scenario.params.k_margin)
    domain_ok = bool(trace.h_goal[0] <= bound.regime.v_max)
    return {
        "delta1_sup": delta1_sup,
        "regime": bound.regime.kind.value,
        "bound_T": bound.T if domain_ok else None,
        "domain_ok": domain_ok,
        "within_deadline": bound.regime.kind is RegimeKind.GLOBAL_WITHIN_DEADLINE,
    }


def _summarize(trace, scenario) -> dict:
    stats = monitor(trace, d_min=scenario.d_min)
    return {
        "scenario": scenario.scenario_id,
        "outcome": {
            "kind": trace.outcome.kind.value,
            "phase": trace.outcome.phase,
            "t": trace.outcome.t,
            "branch": trace.outcome.branch,
            "message": trace.outcome.message,
        },
        "steps": len(trace),
        "dt": trace.dt,
        "reach_times": stats["reach_times"],
        "track_reach_times": [list(t) for t in trace.track_reach_times],
        "max_abs_u": stats["max_abs_u"],
        "max_h_per_branch": stats["max_h_per_branch"],
        "min_separation": stats["min_separation"],
        "max_delta1": stats["max_delta1"],
        "fixed_time_certificate": _fixed_time_certificate(trace, scenario),
        "disc_warnings": trace.disc_warnings,
        "exit_code": _outcome_exit_code(trace.outcome),
    }


def _single_run(scenario_id: str, overrides: dict, dt, out_dir: Path, tag: str = "run"):
    scenario = scenario_from_id(scenario_id, overrides)
    trace = scenario.simulate(dt=dt)
    summary = _summarize(trace, scenario)
    run_dir = out_dir / tag
    run_dir.mkdir(parents=True, exist_ok=True)
    trace_to_csv(trace, run_dir / "trace.csv")
    with open(run_dir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    return summary


def cmd_run(args) -> int:
    try:
        overrides = _parse_overrides(args.set)
        out_dir = _out_dir(args)
        summary = _single_run(args.scenario, overrides, args.dt, out_dir,
                              tag=args.scenario.replace(":", "_"))
    except (ValueError, TypeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps(summary, indent=2))
    return summary["exit_code"]


def cmd_sweep(args) -> int:
    try:
        overrides = _parse_overrides(args.set)
        axis, _, raw = args.sweep.partition("=")
        values = [_parse_value(v) for v in raw.split(",") if v != ""]
        out_dir = _out_dir(args)
    except (ValueError, TypeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if not values:
        print("empty sweep value list; nothing to do")
        return EXIT_OK

    def one(value):
        local = dict(overrides)
        local[axis] = value
        return _single_run(args.scenario, local, args.dt, out_dir,
                           tag=f"{axis}={value}")

    try:
        with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
            summaries = list(pool.map(one, values))
    except (ValueError, TypeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    agg_path = out_dir / "sweep.csv"
    with open(agg_path, "w") as fh:
        fh.write(f"{axis},outcome,reach_last,max_abs_u,max_h,min_separation,max_delta1,exit_code\n")
        for value, s in zip(values, summaries):
            reach = s["reach_times"][-1] if s["reach_times"] else None
            max_h = max(s["max_h_per_branch"].values()) if s["max_h_per_branch"] else None
            max_u = max(s["max_abs_u"]) if s["max_abs_u"] else None
            fh.write(",".join(str(v) for v in [
                value, s["outcome"]["kind"], reach, max_u, max_h,
                s["min_separation"], s["max_delta1"], s["exit_code"]]) + "\n")
    for value, s in zip(values, summaries):
        print(f"{axis}={value}: {s['outcome']['kind']} (exit {s['exit_code']})")
    return max((s["exit_code"] for s in summaries), default=EXIT_OK)


def cmd_verify_bounds(args) -> int:
    grid = dict(DEFAULT_BOUNDS_GRID)
    if args.grid_json:
        try:
            with open(args.grid_json) as fh:
                grid.update(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            print(f"configuration error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    out_dir = _out_dir(args)
    rows = []
    failures = 0
    for alpha in grid["alpha"]:
        for mu in grid["mu"]:
            gains = FxtsGains(alpha1=alpha, alpha2=alpha, mu=mu)
            for delta1 in grid["delta1"]:
                bound = settling_time_bound(gains, delta1)
                for v0 in grid["V0"]:
                    in_domain = v0 <= bound.regime.v_max
                    hit = None
                    ok = True
                    if in_domain:
                        res = simulate_scalar_v(gains, delta1, v0, grid["dt"])
                        hit = res.hit_time
                        ok = hit is not None and hit <= bound.T + 1e-6
                        if delta1 == 0.0 and ok:
                            ok = hit <= mu * math.pi / (2.0 * alpha) + 1e-6
                        failures += int(not ok)
                    rows.append((alpha, alpha, mu, delta1, v0, bound.regime.v_max,
                                 in_domain, hit, bound.T, ok))
    table = out_dir / "bounds.csv"
    with open(table, "w") as fh:
        fh.write("alpha1,alpha2,mu,delta1,V0,v_max,in_domain,hit_time,bound,pass\n")
        for r in rows:
            fh.write(",".join("" if v is None else str(v) for v in r) + "\n")
    n_domain = sum(1 for r in rows if r[6])
    print(f"verified {n_domain} in-domain points of {len(rows)}; "
          f"{failures} bound violations; table at {table}")
    return EXIT_OK if failures == 0 else EXIT_VIOLATION


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fxtqp",
        description="Run fixed-time safe-control scenarios and bound checks.",
    )
    parser.add_argument("--scenario", default="acc",
                        help="acc | two-robot | synthetic:<id>")
    parser.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a scenario config field (repeatable)")
    parser.add_argument("--dt", type=float, default=None,
                        help="integration step override")
    parser.add_argument("--out", default=None,
                        help="output directory (default $FXTQP_OUT or ./fxtqp-out)")
    parser.add_argument("--sweep", default=None, metavar="KEY=V1,V2,...",
                        help="run once per value of a config field")
    parser.add_argument("--jobs", type=int, default=1,
                        help="concurrent sub-runs for sweeps")
    parser.add_argument("--verify-bounds", action="store_true",
                        help="check settling-time bounds against the RK4 oracle")
    parser.add_argument("--grid-json", default=None,
                        help="JSON file overriding the bound-check grid")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.dt is not None and not args.dt > 0:
        print("configuration error: dt must be positive", file=sys.stderr)
        return EXIT_CONFIG
    if args.verify_bounds:
        return cmd_verify_bounds(args)
    if args.sweep:
        return cmd_sweep(args)
    return cmd_run(args)


if __name__ == "__main__":
    sys.exit(main())
