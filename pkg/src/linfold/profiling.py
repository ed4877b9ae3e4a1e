"""Activation-rate profiling and the sign test for provably linear neurons."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dataio import Dataset
from .network import Activation, Network, forward_with_trace


@dataclass
class ActivationProfile:
    rates: list[np.ndarray]  # one vector per hidden layer
    n_samples: int
    dataset_tag: str = ""
    # Per hidden layer, how many samples had a strictly positive output.
    counts: list[np.ndarray] = field(default_factory=list, repr=False)

    def widths(self) -> tuple[int, ...]:
        return tuple(r.shape[0] for r in self.rates)

    def to_dict(self) -> dict:
        return {
            "dataset_tag": self.dataset_tag,
            "n_samples": self.n_samples,
            "layers": {str(i): r.tolist() for i, r in enumerate(self.rates)},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"


def activation_rates(
    net: Network, prune_set: Dataset | np.ndarray, tag: str = "", batch_size: int = 4096
) -> ActivationProfile:
    """Fraction of samples on which each hidden neuron outputs strictly more than 0."""
    x = prune_set.features if isinstance(prune_set, Dataset) else np.asarray(prune_set, float)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("activation profiling needs a non-empty pruning set")
    counts = [np.zeros(layer.out_dim, dtype=np.int64) for layer in net.layers[:-1]]
    for start in range(0, x.shape[0], batch_size):
        _, trace = forward_with_trace(net, x[start : start + batch_size])
        for i in range(net.n_hidden):
            counts[i] += (trace.post_activations[i] > 0.0).sum(axis=0)
    n = x.shape[0]
    return ActivationProfile([c / n for c in counts], n, tag, counts)


def _incoming_is_nonnegative(net: Network, layer_index: int, neuron: int) -> bool:
    """Check the shortcut row feeding a neuron cannot inject a negative term."""
    sc = net.shortcuts.get(layer_index - 1)
    if sc is None:
        return True
    row = sc.weights[neuron]
    for source, offset, width in net.shortcut_blocks(layer_index - 1):
        block = row[offset : offset + width]
        if source == 0 or net.layers[source - 1].activation is not Activation.RELU:
            # Raw network input (or a non-ReLU output) may be negative.
            if np.any(block != 0.0):
                return False
        elif np.any(block < 0.0):
            return False
    return True


def nonnegative_neurons(net: Network) -> list[tuple[int, int]]:
    """All hidden neurons whose incoming weights, shortcut row and bias are >= 0."""
    found = []
    for i, layer in enumerate(net.layers[:-1]):
        ok = (layer.weights >= 0.0).all(axis=1) & (layer.biases >= 0.0)
        for j in np.flatnonzero(ok):
            if _incoming_is_nonnegative(net, i, int(j)):
                found.append((i, int(j)))
    return found


def detect_provable_linear(net: Network) -> list[tuple[int, int]]:
    """(layer, neuron) pairs, 0-based, whose pre-activation can never be negative.

    The first hidden layer is excluded because its input is unconstrained.
    Deeper layers qualify only when fed by a ReLU layer.
    """
    return [
        (i, j)
        for i, j in nonnegative_neurons(net)
        if i >= 1 and net.layers[i - 1].activation is Activation.RELU
    ]
