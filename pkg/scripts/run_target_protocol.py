"""Compress 10 synthetic tasks to 75%, 50% and 25% of their size and tabulate accuracy changes.

    python3 scripts/run_target_protocol.py --out runs/target.csv
"""
import argparse
from pathlib import Path

from linfold.harness import emit_rows, target_protocol

from _tasks import trained_task


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/target.csv")
    ap.add_argument("--tasks", type=int, default=10)
    args = ap.parse_args()
    rows = []
    for task in range(args.tasks):
        net, _, pr, te = trained_task((32, 32, 32), seed=100 + task, epochs=15)
        task_rows, _ = target_protocol(net, pr, te, (0.75, 0.50, 0.25), task=f"synth{task}")
        rows.extend(task_rows)
        print("  ".join(f"{r.fraction:.2f}:{r.accuracy_delta:+.4f}" for r in task_rows), f"synth{task}")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    emit_rows(rows, out)
    unaffected = sum(1 for r in rows if r.fraction == 0.25 and r.accuracy_delta >= -0.01)
    print(f"{unaffected}/{args.tasks} tasks lose at most 1 point at 25% -> {out}")


if __name__ == "__main__":
    main()
