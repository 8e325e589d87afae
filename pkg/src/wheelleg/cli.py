"""Command-line entry point.

    wheelleg run <scenario.json> <log.csv> [--summary <summary.json>] [--seed N]
    wheelleg metrics <log.csv>
    wheelleg plot-data <log.csv> --channels a,b,c
    wheelleg verify [--suite name]

Exit codes: 0 ok, 2 input error, 3 runtime failure (aborted run / failed check).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_RUNTIME = 3

# run-level pass/fail thresholds written into the summary
ROLLING_TOL = 1e-6
JUNCTION_TOL = 1e-9
PENETRATION_MAX = 5e-3


def _clean(x):
    """JSON-safe scalars (NaN / inf -> null)."""
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (float, np.floating)):
        return float(x) if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    return x


def run_summary(result, metrics) -> dict:
    """Metrics plus pass/fail flags of a finished (or aborted) run."""
    accepted = [p for p in result.plans if p.accepted]
    rolling = result.column("rolling_residual") if len(result.data) else np.zeros(0)
    pen = result.column("penetration_max") if len(result.data) else np.zeros(0)
    min_margin = min((p.min_hard_margin for p in accepted), default=math.nan)
    max_jump = max((p.junction_jump for p in accepted), default=math.nan)
    flags = {
        "completed": result.ok,
        "rolling_residual_ok": bool(rolling.size and np.max(rolling) < ROLLING_TOL),
        "zmp_margin_ok": bool(accepted and min_margin >= 0.0),
        "junctions_ok": bool(accepted and max_jump <= JUNCTION_TOL),
        "penetration_ok": bool(pen.size and np.max(pen) < PENETRATION_MAX),
    }
    return _clean({
        "scenario": result.scenario,
        "status": result.status,
        "reason": result.reason,
        "metrics": metrics.to_dict() if metrics is not None else None,
        "flags": flags,
        "passed": all(flags.values()),
        "plans": {"total": len(result.plans), "accepted": len(accepted),
                  "min_hard_margin": min_margin, "max_junction_jump": max_jump},
        "rolling_residual_max": float(np.max(rolling)) if rolling.size else None,
        "timing_ms": {
            "wbc_median": 1e3 * float(np.median(result.wbc_times)) if result.wbc_times else None,
            "wbc_input_median": 1e3 * float(np.median(result.wbc_input_times)) if result.wbc_input_times else None,
            "planner_median": 1e3 * float(np.median(result.planner_times)) if result.planner_times else None,
        },
        "wall_time": result.wall_time,
    })


def _err(msg):
    print(f"wheelleg: {msg}", file=sys.stderr)


def cmd_run(args) -> int:
    from .closed_loop import ScenarioError, load_scenario, run_closed_loop
    from .metrics import LogError, compute_metrics, read_log

    try:
        scenario = load_scenario(args.scenario)
    except ScenarioError as exc:
        _err(str(exc))
        return EXIT_INPUT
    log_path = Path(args.log)
    summary_path = Path(args.summary) if args.summary else log_path.with_suffix(".json")
    try:
        log_path.parent.mkdir(parents=True, exist_ok=True)
        with open(log_path, "w"):
            pass
    except OSError as exc:
        _err(f"cannot write log {log_path}: {exc}")
        return EXIT_INPUT
    result = run_closed_loop(scenario, log_path, seed=args.seed)
    metrics = None
    try:
        # recomputed from the written CSV, so `metrics <log>` reproduces it exactly
        metrics = compute_metrics(read_log(log_path))
    except LogError as exc:
        _err(f"metrics unavailable: {exc}")
    summary = run_summary(result, metrics)
    try:
        summary_path.write_text(json.dumps(summary, indent=2) + "\n")
    except OSError as exc:
        _err(f"cannot write summary {summary_path}: {exc}")
        return EXIT_INPUT
    print(json.dumps(summary, indent=2))
    if not result.ok:
        _err(f"run aborted: {result.reason} (partial log kept at {log_path})")
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_metrics(args) -> int:
    from .metrics import LogError, compute_metrics, read_log
    try:
        m = compute_metrics(read_log(args.log))
    except LogError as exc:
        _err(str(exc))
        return EXIT_INPUT
    print(json.dumps(_clean(m.to_dict()), indent=2))
    return EXIT_OK


def cmd_plot_data(args) -> int:
    from .metrics import LogError, read_log
    try:
        log = read_log(args.log)
    except LogError as exc:
        _err(str(exc))
        return EXIT_INPUT
    channels = [c.strip() for c in args.channels.split(",") if c.strip()]
    missing = [c for c in channels if c not in log.index]
    if not channels or missing:
        _err(f"unknown channel(s) {missing}; available: {', '.join(log.columns)}")
        return EXIT_INPUT
    cols = (["t"] if "t" not in channels else []) + channels
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(cols)
    idx = [log.index[c] for c in cols]
    for row in log.data[:, idx]:
        w.writerow([repr(float(x)) for x in row])
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import SUITES, run_suites
    names = [args.suite] if args.suite else None
    if args.suite and args.suite not in SUITES:
        _err(f"unknown suite {args.suite!r}; available: {', '.join(SUITES)}")
        return EXIT_INPUT
    checks = run_suites(names)
    for c in checks:
        print(c.line())
    return EXIT_OK if all(c.passed for c in checks) else EXIT_RUNTIME


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        _err(message)
        raise SystemExit(EXIT_INPUT)


def build_parser():
    p = _Parser(prog="wheelleg", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run a scenario in closed loop")
    r.add_argument("scenario")
    r.add_argument("log")
    r.add_argument("--summary", default=None, help="summary JSON path (default: <log>.json)")
    r.add_argument("--seed", type=int, default=None)
    r.set_defaults(func=cmd_run)

    m = sub.add_parser("metrics", help="recompute run metrics from a CSV log")
    m.add_argument("log")
    m.set_defaults(func=cmd_metrics)

    d = sub.add_parser("plot-data", help="emit selected log channels as CSV")
    d.add_argument("log")
    d.add_argument("--channels", required=True, help="comma-separated column names")
    d.set_defaults(func=cmd_plot_data)

    v = sub.add_parser("verify", help="run the oracle verification suites")
    v.add_argument("--suite", default=None)
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except BrokenPipeError:
        # downstream closed the pipe (e.g. `| head`); silence the interpreter's flush
        sys.stdout = open(os.devnull, "w")
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
