"""Command-line entry point: ``linfold <command> ...``.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import os
import sys
from contextlib import nullcontext
from pathlib import Path

from . import __version__
from .compression import CompressionConfig, LayerMode, compress
from .dataio import Dataset, SplitSpec, load_csv, load_idx, load_model, save_model, split
from .harness import (
    combined_run,
    emit_report,
    emit_rows,
    evaluate,
    sweep,
    target_protocol,
)
from .network import PRESETS, build_network, count_parameters
from .profiling import activation_rates, detect_provable_linear, nonnegative_neurons
from .training import ImportancePruneConfig, TrainConfig, train


class UsageError(Exception):
    pass


def _fraction_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")


def _arch(text: str):
    if text in PRESETS:
        return text
    try:
        widths = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"--arch must be one of {sorted(PRESETS)} or comma-separated widths"
        )
    if not widths or min(widths) < 1:
        raise argparse.ArgumentTypeError("--arch widths must be >= 1")
    return widths


def _layer_mode(text: str):
    try:
        return CompressionConfig.parse_mode(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _add_data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="CSV file, or IDX images file with --idx-labels")
    p.add_argument("--label-col", help="label column (header name or 0-based index) for CSV data")
    p.add_argument("--no-header", action="store_true", help="CSV file has no header row")
    p.add_argument("--idx-labels", help="IDX labels file; makes --data an IDX images file")
    p.add_argument("--split", type=_fraction_list, default=[0.7, 0.15, 0.15],
                   help="train,prune,test fractions (default 0.7,0.15,0.15)")
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--out-dir", default=".", help="directory for all outputs")


def _add_model_arg(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", required=True, help="model JSON file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="linfold", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train an MLP and write its model file")
    _add_data_args(p)
    p.add_argument("--arch", type=_arch, required=True,
                   help=f"preset ({', '.join(sorted(PRESETS))}) or widths like 64,32")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="model file path (default <out-dir>/model.json)")

    p = sub.add_parser("profile", help="activation rates on the pruning split")
    _add_model_arg(p)
    _add_data_args(p)
    p.add_argument("--report-provable", action="store_true",
                   help="print per-layer counts of provably linear neurons")

    p = sub.add_parser("compress", help="single-shot linearity compression")
    _add_model_arg(p)
    _add_data_args(p)
    p.add_argument("--threshold", type=float, default=1.0)
    p.add_argument("--layer-mode", type=_layer_mode, default=(LayerMode.OPTIMAL, 0),
                   help="none, optimal or abs:K")
    p.add_argument("--out", help="compressed model path (default <out-dir>/compressed.json)")

    p = sub.add_parser("sweep", help="threshold sweep report")
    _add_model_arg(p)
    _add_data_args(p)
    p.add_argument("--step", type=float, default=0.05)
    p.add_argument("--layer-mode", type=_layer_mode, default=(LayerMode.OPTIMAL, 0))

    p = sub.add_parser("target", help="compress to fractions of the original size")
    _add_model_arg(p)
    _add_data_args(p)
    p.add_argument("--fraction", type=_fraction_list, default=[0.75, 0.5, 0.25])
    p.add_argument("--step", type=float, default=0.05)

    p = sub.add_parser("combined", help="importance pruning followed by a linearity sweep")
    _add_model_arg(p)
    _add_data_args(p)
    p.add_argument("--importance-target", type=float, default=0.60)
    p.add_argument("--step", type=float, default=0.05)
    p.add_argument("--layer-mode", type=_layer_mode, default=(LayerMode.OPTIMAL, 0))
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    return parser


def _check_args(args) -> None:
    if len(args.split) != 3:
        raise UsageError("--split needs exactly three fractions")
    try:
        SplitSpec(*args.split, seed=args.split_seed)
    except ValueError as exc:
        raise UsageError(f"--split: {exc}")
    if args.idx_labels is None and args.label_col is None:
        raise UsageError("--label-col is required for CSV data")
    if getattr(args, "threshold", None) is not None and not 0.0 <= args.threshold <= 1.0:
        raise UsageError(f"--threshold must lie in [0, 1], got {args.threshold}")
    step = getattr(args, "step", None)
    if step is not None and not 0.0 < step < 1.0:
        raise UsageError(f"--step must lie in (0, 1), got {step}")
    for f in getattr(args, "fraction", None) or []:
        if not 0.0 < f < 1.0:
            raise UsageError(f"--fraction values must lie in (0, 1), got {f}")
    target = getattr(args, "importance_target", None)
    if target is not None and not 0.0 < target < 1.0:
        raise UsageError(f"--importance-target must lie in (0, 1), got {target}")
    if args.command == "train":
        if args.epochs < 0:
            raise UsageError("--epochs must be >= 0")
        if args.batch_size < 1:
            raise UsageError("--batch-size must be >= 1")
        if args.lr < 0:
            raise UsageError("--lr must be >= 0")


def _load_data(args, label_names=None) -> Dataset:
    if args.idx_labels is not None:
        return load_idx(args.data, args.idx_labels)
    return load_csv(args.data, args.label_col, not args.no_header, label_names)


def _splits(args, label_names=None):
    ds = _load_data(args, label_names)
    return split(ds, SplitSpec(*args.split, seed=args.split_seed))


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def cmd_train(args, out_dir: Path, manifest: dict) -> int:
    train_set, _, _ = _splits(args)
    net = build_network(train_set.n_features, args.arch, train_set.n_classes, seed=args.seed)
    net.label_names = train_set.label_names
    result = train(net, train_set, TrainConfig(args.epochs, args.batch_size, args.lr, args.seed))
    path = Path(args.out) if args.out else out_dir / "model.json"
    save_model(result.net, path)
    manifest["outputs"] = [str(path)]
    manifest["loss_history"] = result.loss_history
    print(f"trained {result.net.widths()} total params {count_parameters(result.net).total} -> {path}")
    return 0


def cmd_profile(args, out_dir: Path, manifest: dict) -> int:
    net = load_model(args.model)
    _, prune_set, _ = _splits(args, net.label_names)
    profile = activation_rates(net, prune_set, tag=f"{args.data}:prune")
    path = out_dir / "profile.json"
    path.write_text(profile.to_json(), encoding="utf-8")
    manifest["outputs"] = [str(path)]
    provable = detect_provable_linear(net)
    print(f"provably linear neurons: {len(provable)}")
    if args.report_provable:
        excluded = sum(1 for i, _ in nonnegative_neurons(net) if i == 0)
        for i in range(net.n_hidden):
            n = sum(1 for layer, _ in provable if layer == i)
            print(f"  layer {i}: {n}")
        print(f"  excluded (first layer): {excluded}")
    return 0


def cmd_compress(args, out_dir: Path, manifest: dict) -> int:
    net = load_model(args.model)
    _, prune_set, _ = _splits(args, net.label_names)
    mode, k = args.layer_mode
    profile = activation_rates(net, prune_set)
    compressed, summary = compress(net, profile, CompressionConfig(args.threshold, mode, k))
    loss0, _ = evaluate(net, prune_set)
    loss1, _ = evaluate(compressed, prune_set)
    drift = abs(loss1 - loss0)
    doc = summary.to_dict()
    doc["prune_loss_before"], doc["prune_loss_after"], doc["prune_loss_drift"] = loss0, loss1, drift
    model_path = Path(args.out) if args.out else out_dir / "compressed.json"
    save_model(compressed, model_path)
    summary_path = out_dir / "summary.json"
    _write_json(summary_path, doc)
    manifest["outputs"] = [str(model_path), str(summary_path)]
    print(f"folds: {summary.folds}; params {summary.params_before['total']} -> "
          f"{summary.params_after['total']}; prune-set loss drift {drift:.3e}")
    if args.threshold == 1.0 and drift > 1e-9:
        print(f"ERROR: threshold 1.0 compression changed the prune-set loss by {drift:.3e}",
              file=sys.stderr)
        return 1
    return 0


def cmd_sweep(args, out_dir: Path, manifest: dict) -> int:
    net = load_model(args.model)
    _, prune_set, test_set = _splits(args, net.label_names)
    mode, k = args.layer_mode
    report = sweep(net, prune_set, test_set, args.step, mode, k, metadata={"data": args.data})
    path = emit_report(report, out_dir / "sweep.csv")
    manifest["outputs"] = [str(path)]
    print(f"{len(report.rows)} rows -> {path}")
    return 0


def cmd_target(args, out_dir: Path, manifest: dict) -> int:
    net = load_model(args.model)
    _, prune_set, test_set = _splits(args, net.label_names)
    rows, results = target_protocol(net, prune_set, test_set, args.fraction, task=args.data,
                                    step=args.step)
    outputs = [str(emit_rows(rows, out_dir / "target.csv"))]
    for row, res in zip(rows, results):
        path = out_dir / f"compressed_{row.fraction:g}.json"
        save_model(res.net, path)
        outputs.append(str(path))
        if not row.target_reached:
            print(f"WARN target_not_reached: fraction {row.fraction} best achieved "
                  f"{row.achieved_fraction:.4f}")
        else:
            print(f"fraction {row.fraction}: achieved {row.achieved_fraction:.4f} at "
                  f"threshold {row.threshold_used}, accuracy delta {row.accuracy_delta:+.4f}")
    manifest["outputs"] = outputs
    return 0


def cmd_combined(args, out_dir: Path, manifest: dict) -> int:
    net = load_model(args.model)
    train_set, prune_set, test_set = _splits(args, net.label_names)
    mode, _ = args.layer_mode
    result = combined_run(
        net, train_set, prune_set, test_set, args.importance_target, args.step, mode,
        train_cfg=TrainConfig(1, args.batch_size, args.lr, args.seed),
    )
    paths = [
        emit_report(result.unpruned, out_dir / "combined_unpruned.csv"),
        emit_report(result.pruned, out_dir / "combined_pruned.csv"),
        emit_rows(result.prune.log, out_dir / "prune_log.csv"),
    ]
    model_path = out_dir / "pruned_model.json"
    save_model(result.prune.net, model_path)
    manifest["outputs"] = [str(p) for p in paths] + [str(model_path)]
    if not result.prune.target_reached:
        print("WARN target_not_reached: importance pruning stopped at "
              f"{count_parameters(result.prune.net).total / result.prune.original_params:.4f}")
    print(f"reports -> {paths[0]}, {paths[1]}")
    return 0


COMMANDS = {
    "train": cmd_train,
    "profile": cmd_profile,
    "compress": cmd_compress,
    "sweep": cmd_sweep,
    "target": cmd_target,
    "combined": cmd_combined,
}


def _thread_limit():
    value = os.environ.get("LINFOLD_THREADS")
    if not value:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=max(1, int(value)))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _check_args(args)
    except UsageError as exc:
        parser.error(str(exc))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": args.command,
        "config": {k: (list(v) if isinstance(v, tuple) else v) for k, v in vars(args).items()
                   if k != "command"},
        "seeds": {k: getattr(args, k) for k in ("seed", "split_seed") if hasattr(args, k)},
        "inputs": [p for p in (getattr(args, "model", None), args.data, args.idx_labels) if p],
        "outputs": [],
        "version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "status": "running",
    }
    code = 1
    try:
        with _thread_limit():
            code = COMMANDS[args.command](args, out_dir, manifest)
    except Exception as exc:  # noqa: BLE001 - any runtime failure maps to exit 1
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        print(f"error: {exc}", file=sys.stderr)
        code = 1
    finally:
        manifest["status"] = "ok" if code == 0 else "failed"
        _write_json(out_dir / f"{args.command}.manifest.json", manifest)
    return code


if __name__ == "__main__":
    sys.exit(main())
