"""Importance pruning to 60% followed by a linearity sweep on a scaled Fashion-preset stand-in.

    python3 scripts/run_combined.py --out-dir runs/combined
"""
import argparse
from pathlib import Path

from linfold.harness import combined_run, emit_report, emit_rows
from linfold.training import TrainConfig

from _tasks import SCALED_FASHION, trained_task


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", default="runs/combined")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--target", type=float, default=0.60)
    args = ap.parse_args()
    net, tr, pr, te = trained_task(SCALED_FASHION, args.seed, n=3000, features=49, classes=10,
                                   epochs=20, shift=0.5, fractions=(0.7, 0.15, 0.15))
    res = combined_run(net, tr, pr, te, args.target, train_cfg=TrainConfig(1, 32, 0.05, args.seed))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    emit_report(res.unpruned, out / "combined_unpruned.csv")
    emit_report(res.pruned, out / "combined_pruned.csv")
    emit_rows(res.prune.log, out / "prune_log.csv")
    a, b = res.unpruned.rows, res.pruned.rows
    i = [r.threshold for r in a].index(0.35)
    print(f"test accuracy unpruned {res.unpruned_eval[1]:.3f} pruned {res.pruned_eval[1]:.3f}")
    print(f"removed between t=1.0 and t=0.35: unpruned {a[0].total_params - a[i].total_params}, "
          f"pruned {b[0].total_params - b[i].total_params}")


if __name__ == "__main__":
    main()
