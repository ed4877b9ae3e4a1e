"""Threshold sweeps, compress-to-size, and combined pruning experiments."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .compression import CompressionConfig, LayerMode, compress
from .dataio import Dataset
from .network import Network, count_parameters, forward
from .profiling import activation_rates
from .training import ImportancePruneConfig, PruneResult, TrainConfig, importance_prune

REPORT_COLUMNS = ("threshold", "layer_params", "shortcut_params", "total_params", "loss", "accuracy")
LOG_FLOOR = 1e-12


def evaluate(net: Network, ds: Dataset) -> tuple[float, float]:
    """Mean cross-entropy and argmax accuracy (ties go to the lowest class)."""
    if len(ds) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    probs = forward(net, ds.features)
    picked = probs[np.arange(len(ds)), ds.labels]
    loss = float(-np.log(np.maximum(picked, LOG_FLOOR)).mean())
    acc = float((probs.argmax(axis=1) == ds.labels).mean())
    return loss, acc


def thresholds(step: float) -> list[float]:
    """1.0, 1.0 - step, ... down to the last value above zero."""
    if not 0.0 < step < 1.0:
        raise ValueError(f"sweep step must lie in (0, 1), got {step}")
    out, k = [], 0
    while True:
        t = round(1.0 - k * step, 10)
        if t <= 1e-9:
            return out
        out.append(t)
        k += 1


@dataclass
class ReportRow:
    threshold: float
    layer_params: int
    shortcut_params: int
    total_params: int
    loss: float
    accuracy: float


@dataclass
class CompressionReport:
    rows: list[ReportRow] = field(default_factory=list)
    metadata: dict[str, str] = field(default_factory=dict)

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.rows]


def _row(threshold: float, net: Network, test_set: Dataset) -> ReportRow:
    counts = count_parameters(net)
    loss, acc = evaluate(net, test_set)
    return ReportRow(threshold, counts.layer_params, counts.shortcut_params, counts.total, loss, acc)


def _mode_label(mode: LayerMode, k: int) -> str:
    return f"abs:{k}" if mode is LayerMode.ABSOLUTE else mode.value


def sweep(
    net: Network,
    prune_set: Dataset,
    test_set: Dataset,
    step: float = 0.05,
    layer_mode: LayerMode = LayerMode.OPTIMAL,
    min_linear: int = 0,
    metadata: dict | None = None,
) -> CompressionReport:
    """Compress a fresh copy of ``net`` at each threshold and evaluate it.

    Every row starts from the original network, so the profile of the
    original is computed once and shared.
    """
    profile = activation_rates(net, prune_set)
    meta = {"layer_mode": _mode_label(layer_mode, min_linear), "step": repr(step)}
    meta.update({k: str(v) for k, v in (metadata or {}).items()})
    report = CompressionReport([], meta)
    for t in thresholds(step):
        compressed, _ = compress(net, profile, CompressionConfig(t, layer_mode, min_linear))
        report.rows.append(_row(t, compressed, test_set))
    return report


@dataclass
class TargetResult:
    net: Network
    fraction: float
    achieved_fraction: float
    threshold_used: float
    target_reached: bool

    @property
    def target_not_reached(self) -> bool:
        return not self.target_reached


def compress_to_fraction(
    net: Network, prune_set: Dataset, fraction: float, step: float = 0.05
) -> TargetResult:
    """Lower the threshold until the model first fits in ``fraction`` of its size."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"target fraction must lie in (0, 1), got {fraction}")
    original = count_parameters(net).total
    profile = activation_rates(net, prune_set)
    best = None
    for t in thresholds(step):
        compressed, _ = compress(net, profile, CompressionConfig(t, LayerMode.OPTIMAL))
        achieved = count_parameters(compressed).total / original
        if achieved <= fraction:
            return TargetResult(compressed, fraction, achieved, t, True)
        if best is None or achieved < best.achieved_fraction:
            best = TargetResult(compressed, fraction, achieved, t, False)
    return best


@dataclass
class TargetRow:
    task: str
    fraction: float
    threshold_used: float
    achieved_fraction: float
    target_reached: bool
    original_accuracy: float
    accuracy: float
    accuracy_delta: float


def target_protocol(
    net: Network,
    prune_set: Dataset,
    test_set: Dataset,
    fractions=(0.75, 0.50, 0.25),
    task: str = "",
    step: float = 0.05,
) -> tuple[list[TargetRow], list[TargetResult]]:
    """Compress to each fraction and compare test accuracy with the original."""
    _, base_acc = evaluate(net, test_set)
    rows, results = [], []
    for f in fractions:
        res = compress_to_fraction(net, prune_set, f, step)
        _, acc = evaluate(res.net, test_set)
        rows.append(TargetRow(task, f, res.threshold_used, res.achieved_fraction,
                              res.target_reached, base_acc, acc, acc - base_acc))
        results.append(res)
    return rows, results


@dataclass
class CombinedResult:
    unpruned: CompressionReport
    pruned: CompressionReport
    prune: PruneResult
    unpruned_eval: tuple[float, float]
    pruned_eval: tuple[float, float]


def combined_run(
    net: Network,
    train_set: Dataset,
    prune_set: Dataset,
    test_set: Dataset,
    importance_target: float = 0.60,
    step: float = 0.05,
    layer_mode: LayerMode = LayerMode.OPTIMAL,
    train_cfg: TrainConfig | None = None,
    prune_cfg: ImportancePruneConfig | None = None,
) -> CombinedResult:
    """Sweep the unpruned network, then importance-prune it and sweep again."""
    if not 0.0 < importance_target < 1.0:
        raise ValueError("importance_target must lie in (0, 1)")
    if prune_cfg is None:
        prune_cfg = ImportancePruneConfig(target_fraction=importance_target)
    a = sweep(net, prune_set, test_set, step, layer_mode, metadata={"model": "unpruned"})
    pruned = importance_prune(net, train_set, prune_cfg, train_cfg)
    b = sweep(pruned.net, prune_set, test_set, step, layer_mode,
              metadata={"model": "importance_pruned",
                        "importance_target": importance_target,
                        "target_reached": pruned.target_reached})
    return CombinedResult(a, b, pruned, evaluate(net, test_set), evaluate(pruned.net, test_set))


def report_to_csv(report: CompressionReport) -> str:
    buf = io.StringIO()
    for key in sorted(report.metadata):
        buf.write(f"# {key}={report.metadata[key]}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for r in report.rows:
        writer.writerow([repr(float(r.threshold)), r.layer_params, r.shortcut_params,
                         r.total_params, repr(float(r.loss)), repr(float(r.accuracy))])
    return buf.getvalue()


def report_from_csv(text: str) -> CompressionReport:
    meta, body = {}, []
    for line in text.splitlines():
        if line.startswith("# "):
            key, _, value = line[2:].partition("=")
            meta[key] = value
        elif line:
            body.append(line)
    reader = csv.reader(body)
    header = next(reader)
    if tuple(header) != REPORT_COLUMNS:
        raise ValueError(f"unexpected report columns {header}")
    rows = [ReportRow(float(t), int(lp), int(sp), int(tp), float(lo), float(ac))
            for t, lp, sp, tp, lo, ac in reader]
    return CompressionReport(rows, meta)


def emit_report(report: CompressionReport, path, fmt: str = "csv") -> Path:
    path = Path(path)
    if fmt == "csv":
        text = report_to_csv(report)
    elif fmt == "json":
        text = json.dumps(
            {"metadata": report.metadata, "rows": [asdict(r) for r in report.rows]}, indent=1
        ) + "\n"
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    path.write_text(text, encoding="utf-8")
    return path


def load_report(path) -> CompressionReport:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        doc = json.loads(text)
        return CompressionReport([ReportRow(**r) for r in doc["rows"]], doc["metadata"])
    return report_from_csv(text)


def emit_rows(rows: list, path) -> Path:
    """Write dataclass rows (e.g. :class:`TargetRow`) as a plain CSV table."""
    path = Path(path)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if rows:
        names = list(asdict(rows[0]))
        writer.writerow(names)
        for r in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in asdict(r).values()])
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path
