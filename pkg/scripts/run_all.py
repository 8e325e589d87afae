"""Run every bundled scenario, writing logs and summaries to an output directory.

    python3 scripts/run_all.py [out_dir]
"""
import json
import sys
from pathlib import Path

from wheelleg.cli import run_summary
from wheelleg.closed_loop import load_scenario, run_closed_loop
from wheelleg.metrics import compute_metrics, read_log

ROOT = Path(__file__).resolve().parents[1]


def main(out_dir="runs"):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ok = True
    for path in sorted((ROOT / "scenarios").glob("*.json")):
        log = out / f"{path.stem}.csv"
        result = run_closed_loop(load_scenario(path), log)
        summary = run_summary(result, compute_metrics(read_log(log)))
        log.with_suffix(".json").write_text(json.dumps(summary, indent=2) + "\n")
        m = summary["metrics"] or {}
        print(f"{path.stem:16s} {result.status:6s} passed={summary['passed']!s:5s} "
              f"cot={m.get('cot')} rmse={m.get('com_rmse', float('nan')):.4f} wall={result.wall_time:.1f}s")
        ok &= summary["passed"]
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main(*sys.argv[1:]))
