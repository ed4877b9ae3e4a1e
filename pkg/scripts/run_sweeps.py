"""Threshold sweeps in None, Optimal and abs:3 layer modes on a trained synthetic task.

    python3 scripts/run_sweeps.py --out-dir runs/sweeps --seeds 0 1 2
"""
import argparse
from pathlib import Path

from linfold.compression import LayerMode
from linfold.harness import emit_report, sweep
from linfold.network import count_parameters

from _tasks import trained_task

MODES = {"none": (LayerMode.NONE, 0), "optimal": (LayerMode.OPTIMAL, 0), "abs3": (LayerMode.ABSOLUTE, 3)}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", default="runs/sweeps")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--widths", default="32,32,32,32,32")
    ap.add_argument("--step", type=float, default=0.05)
    args = ap.parse_args()
    widths = tuple(int(w) for w in args.widths.split(","))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for seed in args.seeds:
        net, _, pr, te = trained_task(widths, seed)
        original = count_parameters(net).total
        for name, (mode, k) in MODES.items():
            rep = sweep(net, pr, te, args.step, mode, k,
                        metadata={"seed": seed, "architecture": args.widths, "original": original})
            path = emit_report(rep, out / f"sweep_{name}_seed{seed}.csv")
            totals = rep.column("total_params")
            print(f"seed {seed} {name:8s} original {original} min {min(totals)} max {max(totals)} -> {path}")


if __name__ == "__main__":
    main()
