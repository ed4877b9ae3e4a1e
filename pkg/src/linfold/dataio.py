"""Datasets, splits, model files and synthetic tasks."""
from __future__ import annotations

import csv
import gzip
import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .network import Activation, DenseLayer, Network, Shortcut, validate

FORMAT_NAME = "linfold-model"
FORMAT_VERSION = "1"

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class DataError(ValueError):
    pass


class ModelFormatError(ValueError):
    pass


@dataclass
class Dataset:
    features: np.ndarray  # (n_samples, n_features)
    labels: np.ndarray  # (n_samples,) int
    n_classes: int
    label_names: list[str] | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.features.shape[0] != self.labels.shape[0]:
            raise DataError(
                f"features {self.features.shape} do not match {self.labels.shape[0]} labels"
            )
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise DataError(f"labels outside 0..{self.n_classes - 1}")
        if not np.isfinite(self.features).all():
            raise DataError("non-finite feature value")

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, index) -> "Dataset":
        return Dataset(self.features[index], self.labels[index], self.n_classes, self.label_names)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.7
    prune_fraction: float = 0.15
    test_fraction: float = 0.15
    seed: int = 0

    def __post_init__(self):
        fracs = (self.train_fraction, self.prune_fraction, self.test_fraction)
        if any(not 0.0 <= f <= 1.0 for f in fracs):
            raise ValueError(f"split fractions must lie in [0, 1], got {fracs}")
        if abs(sum(fracs) - 1.0) > 1e-12:
            raise ValueError(f"split fractions must sum to 1, got {sum(fracs)!r}")


def load_csv(
    path,
    label_column: str | int,
    has_header: bool = True,
    label_names: list[str] | None = None,
) -> Dataset:
    """Read a numeric CSV; labels map to 0..C-1 in first-appearance order.

    ``label_names`` pins an existing encoding (e.g. the one stored in a model
    file); unseen labels are then an error.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such data file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    header = rows.pop(0) if has_header and rows else None
    if isinstance(label_column, str) and not label_column.lstrip("-").isdigit():
        if header is None:
            raise DataError(f"label column {label_column!r} given by name but file has no header")
        try:
            col = header.index(label_column)
        except ValueError:
            raise DataError(f"label column {label_column!r} not in header {header}") from None
    else:
        col = int(label_column)
    if not rows:
        raise DataError(f"{path}: empty dataset")

    names = list(label_names) if label_names is not None else []
    lookup = {name: i for i, name in enumerate(names)}
    pinned = label_names is not None
    labels, features = [], []
    width = len(rows[0])
    if not -width <= col < width:
        raise DataError(f"label column {col} out of range for {width} columns")
    col %= width
    for r, row in enumerate(rows):
        line = r + (2 if header is not None else 1)
        if len(row) != width:
            raise DataError(f"line {line}: expected {width} cells, found {len(row)}")
        raw = row[col].strip()
        if raw not in lookup:
            if pinned:
                raise DataError(f"line {line}: label {raw!r} unknown to the model")
            lookup[raw] = len(names)
            names.append(raw)
        labels.append(lookup[raw])
        values = []
        for c, cell in enumerate(row):
            if c == col:
                continue
            try:
                v = float(cell)
            except ValueError:
                v = math.nan
            if not math.isfinite(v):
                raise DataError(f"line {line}, column {c + 1}: non-numeric cell {cell!r}")
            values.append(v)
        features.append(values)
    return Dataset(np.array(features, dtype=np.float64), np.array(labels), len(names), names)


def _open_maybe_gz(path: Path):
    return gzip.open(path, "rb") if path.suffix == ".gz" else path.open("rb")


def load_idx(images_path, labels_path) -> Dataset:
    """Read an MNIST-family IDX pair; pixels are flattened and scaled to [0, 1]."""
    images_path, labels_path = Path(images_path), Path(labels_path)
    with _open_maybe_gz(images_path) as fh:
        blob = fh.read()
    if len(blob) < 16:
        raise DataError(f"{images_path}: truncated header")
    magic, n_images, n_rows, n_cols = struct.unpack(">IIII", blob[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise DataError(f"{images_path}: bad magic number {magic:#010x}")
    need = n_images * n_rows * n_cols
    if len(blob) - 16 < need:
        raise DataError(f"{images_path}: truncated, expected {need} pixel bytes")
    with _open_maybe_gz(labels_path) as fh:
        lblob = fh.read()
    if len(lblob) < 8:
        raise DataError(f"{labels_path}: truncated header")
    lmagic, n_labels = struct.unpack(">II", lblob[:8])
    if lmagic != IDX_LABELS_MAGIC:
        raise DataError(f"{labels_path}: bad magic number {lmagic:#010x}")
    if n_labels != n_images:
        raise DataError(f"image count {n_images} does not match label count {n_labels}")
    if len(lblob) - 8 < n_labels:
        raise DataError(f"{labels_path}: truncated, expected {n_labels} labels")
    pixels = np.frombuffer(blob, dtype=np.uint8, count=need, offset=16)
    features = pixels.reshape(n_images, n_rows * n_cols).astype(np.float64) / 255.0
    labels = np.frombuffer(lblob, dtype=np.uint8, count=n_labels, offset=8).astype(np.int64)
    n_classes = int(labels.max()) + 1 if n_labels else 0
    return Dataset(features, labels, n_classes, [str(i) for i in range(n_classes)])


def split(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset, Dataset]:
    n = len(ds)
    order = np.random.default_rng(spec.seed).permutation(n)
    n_train = int(round(spec.train_fraction * n))
    n_prune = min(int(round(spec.prune_fraction * n)), n - n_train)
    sizes = (n_train, n_prune, n - n_train - n_prune)
    fracs = (spec.train_fraction, spec.prune_fraction, spec.test_fraction)
    for name, size, frac in zip(("train", "prune", "test"), sizes, fracs):
        if frac > 0 and size == 0:
            raise DataError(f"{name} split is empty for fraction {frac} of {n} samples")
    bounds = np.cumsum((0, *sizes))
    return tuple(ds.subset(order[bounds[i] : bounds[i + 1]]) for i in range(3))


def synth_dataset(
    n: int,
    n_features: int,
    n_classes: int,
    seed: int,
    *,
    separation: float = 3.0,
    spread: float = 1.0,
    shift: float = 0.0,
) -> Dataset:
    """Gaussian blobs, one per class, with class labels assigned round-robin.

    ``shift`` moves every feature by a constant, which pushes ReLU neurons in
    an untrained net towards always-on and makes compressible fixtures.
    """
    if min(n, n_features, n_classes) < 1:
        raise ValueError("n, n_features and n_classes must all be >= 1")
    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, separation, size=(n_classes, n_features))
    labels = rng.permutation(np.arange(n) % n_classes)
    features = centers[labels] + rng.normal(0.0, spread, size=(n, n_features)) + shift
    return Dataset(features, labels, n_classes, [str(c) for c in range(n_classes)])


def model_to_dict(net: Network) -> dict:
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "input_dim": int(net.input_dim),
        "label_names": net.label_names,
        "layers": [
            {
                "activation": layer.activation.value,
                "rows": layer.out_dim,
                "cols": layer.in_dim,
                "weights": layer.weights.ravel().tolist(),
                "biases": layer.biases.tolist(),
            }
            for layer in net.layers
        ],
        "shortcuts": [
            {
                "layer": index,
                "rows": net.shortcuts[index].dest_dim,
                "cols": net.shortcuts[index].src_dim,
                "weights": net.shortcuts[index].weights.ravel().tolist(),
            }
            for index in sorted(net.shortcuts)
        ],
    }


def _matrix(entry: dict, where: str) -> np.ndarray:
    rows, cols, flat = entry["rows"], entry["cols"], entry["weights"]
    if not (isinstance(rows, int) and isinstance(cols, int)) or rows < 0 or cols < 0:
        raise ModelFormatError(f"{where}: invalid shape ({rows!r}, {cols!r})")
    if len(flat) != rows * cols:
        raise ModelFormatError(
            f"{where}: {len(flat)} weights do not fill a {rows}x{cols} matrix"
        )
    return np.array(flat, dtype=np.float64).reshape(rows, cols)


def model_from_dict(doc: dict) -> Network:
    if doc.get("format") != FORMAT_NAME:
        raise ModelFormatError(f"not a {FORMAT_NAME} document")
    if doc.get("version") != FORMAT_VERSION:
        raise ModelFormatError(
            f"unsupported model format version {doc.get('version')!r}, expected {FORMAT_VERSION!r}"
        )
    try:
        layers = []
        for i, entry in enumerate(doc["layers"]):
            weights = _matrix(entry, f"layer {i}")
            biases = np.array(entry["biases"], dtype=np.float64)
            layers.append(DenseLayer(weights, biases, Activation(entry["activation"])))
        shortcuts = {}
        for entry in doc["shortcuts"]:
            index = int(entry["layer"])
            if index in shortcuts:
                raise ModelFormatError(f"duplicate shortcut at layer {index}")
            shortcuts[index] = Shortcut(_matrix(entry, f"shortcut {index}"))
        net = Network(layers, shortcuts, int(doc["input_dim"]), doc.get("label_names"))
    except (KeyError, TypeError) as exc:
        raise ModelFormatError(f"malformed model document: {exc}") from exc
    problems = validate(net)
    if problems:
        raise ModelFormatError(
            "inconsistent model: " + "; ".join(f"{v.code}: {v.message}" for v in problems)
        )
    return net


def dumps_model(net: Network) -> str:
    return json.dumps(model_to_dict(net), separators=(",", ":"), allow_nan=False) + "\n"


def save_model(net: Network, path) -> None:
    problems = validate(net)
    if problems:
        raise ModelFormatError("refusing to save invalid network: " + problems[0].message)
    Path(path).write_text(dumps_model(net), encoding="utf-8")


def load_model(path) -> Network:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not valid JSON ({exc})") from exc
    return model_from_dict(doc)
