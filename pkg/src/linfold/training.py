"""Mini-batch SGD for plain MLPs and activation-rate importance pruning."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dataio import Dataset
from .network import Activation, Network, count_parameters, forward, remove_neurons, validate
from .profiling import activation_rates


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    learning_rate: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


@dataclass(frozen=True)
class ImportancePruneConfig:
    target_fraction: float = 0.6
    prune_rate_per_epoch: float = 0.05
    min_train_accuracy: float = 0.70
    max_epochs: int = 15

    def __post_init__(self):
        if not 0.0 < self.target_fraction <= 1.0:
            raise ValueError("target_fraction must lie in (0, 1]")
        if not 0.0 < self.prune_rate_per_epoch <= 1.0:
            raise ValueError("prune_rate_per_epoch must lie in (0, 1]")


@dataclass
class TrainResult:
    net: Network
    loss_history: list[float]


def _check_trainable(net: Network, ds: Dataset) -> None:
    if net.shortcuts:
        raise TrainingError("training networks with shortcut connections is not supported")
    if net.layers[-1].activation is not Activation.SOFTMAX:
        raise TrainingError("training needs a softmax output layer")
    if ds.n_features != net.input_dim:
        raise TrainingError(f"dataset has {ds.n_features} features, network expects {net.input_dim}")
    if ds.n_classes > net.output_dim or (len(ds) and ds.labels.max() >= net.output_dim):
        raise TrainingError(f"dataset has {ds.n_classes} classes, network outputs {net.output_dim}")


def _sgd_step(net: Network, x: np.ndarray, y: np.ndarray, lr: float) -> float:
    acts = [x]
    h = x
    for layer in net.layers[:-1]:
        h = np.maximum(h @ layer.weights.T + layer.biases, 0.0)
        acts.append(h)
    out = net.layers[-1]
    z = h @ out.weights.T + out.biases
    z -= z.max(axis=1, keepdims=True)
    p = np.exp(z)
    p /= p.sum(axis=1, keepdims=True)
    rows = np.arange(x.shape[0])
    loss = float(-np.log(np.maximum(p[rows, y], 1e-12)).mean())
    delta = p
    delta[rows, y] -= 1.0
    delta /= x.shape[0]
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        grad_w = delta.T @ acts[i]
        grad_b = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ layer.weights) * (acts[i] > 0.0)
        layer.weights -= lr * grad_w
        layer.biases -= lr * grad_b
    return loss


def train_epoch(net: Network, ds: Dataset, cfg: TrainConfig, rng: np.random.Generator,
                epoch: int = 0) -> float:
    """One in-place pass over ``ds``; returns the mean batch loss."""
    order = rng.permutation(len(ds))
    losses = []
    for b, start in enumerate(range(0, len(ds), cfg.batch_size)):
        idx = order[start : start + cfg.batch_size]
        loss = _sgd_step(net, ds.features[idx], ds.labels[idx], cfg.learning_rate)
        if not math.isfinite(loss):
            raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b}")
        losses.append(loss)
    return float(np.mean(losses)) if losses else float("nan")


def train(net: Network, train_set: Dataset, cfg: TrainConfig) -> TrainResult:
    """Train a copy of ``net``; deterministic for a fixed ``cfg.seed``."""
    _check_trainable(net, train_set)
    net = net.copy()
    rng = np.random.default_rng(cfg.seed)
    history = [train_epoch(net, train_set, cfg, rng, e) for e in range(cfg.epochs)]
    return TrainResult(net, history)


def accuracy(net: Network, ds: Dataset) -> float:
    return float((forward(net, ds.features).argmax(axis=1) == ds.labels).mean())


@dataclass
class PruneEpoch:
    epoch: int
    train_loss: float
    train_accuracy: float
    removed: int
    params: int


@dataclass
class PruneResult:
    net: Network
    log: list[PruneEpoch] = field(default_factory=list)
    target_reached: bool = True
    original_params: int = 0

    @property
    def target_not_reached(self) -> bool:
        return not self.target_reached


def least_active(rates: list[np.ndarray], k: int) -> dict[int, list[int]]:
    """Pick ``k`` neurons with the lowest rate globally, keeping one per layer."""
    ranked = sorted(
        (float(r[j]), i, j) for i, r in enumerate(rates) for j in range(r.shape[0])
    )
    left = [r.shape[0] for r in rates]
    chosen: dict[int, list[int]] = {}
    for _, i, j in ranked:
        if k == 0:
            break
        if left[i] <= 1:
            continue
        chosen.setdefault(i, []).append(j)
        left[i] -= 1
        k -= 1
    return chosen


def importance_prune(
    net: Network,
    train_set: Dataset,
    cfg: ImportancePruneConfig,
    train_cfg: TrainConfig | None = None,
) -> PruneResult:
    """Continue training while removing the least-activated hidden neurons each epoch.

    Pruning happens only after epochs whose training accuracy exceeds
    ``cfg.min_train_accuracy``; the loop ends once the parameter count is at
    or below ``target_fraction`` of the original or after ``max_epochs``.
    """
    train_cfg = train_cfg or TrainConfig()
    _check_trainable(net, train_set)
    net = net.copy()
    original = count_parameters(net).total
    limit = cfg.target_fraction * original
    result = PruneResult(net, [], True, original)
    rng = np.random.default_rng(train_cfg.seed)
    for epoch in range(cfg.max_epochs):
        if count_parameters(net).total <= limit:
            return result
        loss = train_epoch(net, train_set, train_cfg, rng, epoch)
        acc = accuracy(net, train_set)
        removed = 0
        if acc > cfg.min_train_accuracy:
            rates = activation_rates(net, train_set).rates
            remaining = sum(r.shape[0] for r in rates)
            k = max(1, math.ceil(cfg.prune_rate_per_epoch * remaining))
            for i, neurons in sorted(least_active(rates, k).items()):
                remove_neurons(net, i, neurons)
                removed += len(neurons)
            problems = validate(net)
            if problems:
                raise TrainingError(f"pruning broke the network: {problems[0].message}")
        result.log.append(PruneEpoch(epoch, loss, acc, removed, count_parameters(net).total))
    result.target_reached = count_parameters(net).total <= limit
    return result
