"""Dense ReLU networks with bias-free shortcut connections.

A shortcut attached at layer ``L`` reads the input of layer ``L`` (plus the
cumulative inputs of any shortcut chain ending at ``L``) and is added to the
pre-activation of layer ``L + 1``. Cumulative inputs are concatenated newest
first: a shortcut at ``k`` in a chain starting at ``s`` sees
``(x_k, x_{k-1}, ..., x_s)``.
"""
from __future__ import annotations

import copy
import enum
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

PRESETS: dict[str, tuple[int, ...]] = {
    "titanic": (25, 50, 100, 100, 100, 100),
    "fashion": (1024, 1024, 512, 512, 256, 256),
    "openml": (64, 128, 128, 256, 256),
    "small": (16, 16),
}


class Activation(str, enum.Enum):
    RELU = "relu"
    SOFTMAX = "softmax"
    IDENTITY = "identity"


class DimensionError(ValueError):
    """Raised when an array does not fit the layer it is fed to."""

    def __init__(self, message: str, layer_index: int | None = None):
        if layer_index is not None:
            message = f"layer {layer_index}: {message}"
        super().__init__(message)
        self.layer_index = layer_index


@dataclass
class DenseLayer:
    weights: np.ndarray  # (out_dim, in_dim)
    biases: np.ndarray  # (out_dim,)
    activation: Activation = Activation.RELU

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


@dataclass
class Shortcut:
    weights: np.ndarray  # (dest_dim, src_dim)

    @property
    def src_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def dest_dim(self) -> int:
        return self.weights.shape[0]


@dataclass
class Network:
    layers: list[DenseLayer]
    shortcuts: dict[int, Shortcut] = field(default_factory=dict)
    input_dim: int | None = None
    label_names: list[str] | None = None

    def __post_init__(self):
        if self.input_dim is None:
            self.input_dim = self.layers[0].in_dim if self.layers else 0

    @property
    def n_hidden(self) -> int:
        return len(self.layers) - 1

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    def widths(self) -> tuple[int, ...]:
        return tuple(layer.out_dim for layer in self.layers)

    def copy(self) -> "Network":
        return copy.deepcopy(self)

    def chain_start(self, index: int) -> int:
        """First layer of the shortcut chain that includes the shortcut at ``index``."""
        start = index
        while start - 1 in self.shortcuts:
            start -= 1
        return start

    def shortcut_blocks(self, index: int) -> list[tuple[int, int, int]]:
        """Column layout of the shortcut at ``index`` as ``(input_of_layer, offset, width)``."""
        blocks = []
        offset = 0
        for i in range(index, self.chain_start(index) - 1, -1):
            width = self.layers[i].in_dim
            blocks.append((i, offset, width))
            offset += width
        return blocks

    def expected_src_dim(self, index: int) -> int:
        return sum(width for _, _, width in self.shortcut_blocks(index))


class ParameterCount(NamedTuple):
    layer_params: int
    shortcut_params: int
    total: int


@dataclass
class ForwardTrace:
    pre_activations: list[np.ndarray]
    post_activations: list[np.ndarray]

    @property
    def output(self) -> np.ndarray:
        return self.post_activations[-1]


def _activate(z: np.ndarray, kind: Activation) -> np.ndarray:
    if kind is Activation.RELU:
        return np.maximum(z, 0.0)
    if kind is Activation.SOFTMAX:
        shifted = z - z.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=-1, keepdims=True)
    return z.copy()


def _run(net: Network, x: np.ndarray, keep_trace: bool):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    h = np.atleast_2d(x)
    if h.shape[1] != net.input_dim:
        raise DimensionError(
            f"input has {h.shape[1]} features, network expects {net.input_dim}", 0
        )
    pres, posts = [], []
    skip = None
    cumulative = None
    for i, layer in enumerate(net.layers):
        if h.shape[1] != layer.in_dim:
            raise DimensionError(
                f"received {h.shape[1]} inputs, weights expect {layer.in_dim}", i
            )
        z = h @ layer.weights.T + layer.biases
        if skip is not None:
            if skip.shape[1] != z.shape[1]:
                raise DimensionError(
                    f"cached shortcut output has width {skip.shape[1]}, "
                    f"pre-activation has {z.shape[1]}",
                    i,
                )
            z = z + skip
        shortcut = net.shortcuts.get(i)
        if shortcut is not None:
            cumulative = h if skip is None else np.concatenate([h, cumulative], axis=1)
            if cumulative.shape[1] != shortcut.src_dim:
                raise DimensionError(
                    f"shortcut expects {shortcut.src_dim} cumulative inputs, "
                    f"got {cumulative.shape[1]}",
                    i,
                )
            skip = cumulative @ shortcut.weights.T
        else:
            skip = None
            cumulative = None
        h = _activate(z, layer.activation)
        if keep_trace:
            pres.append(z[0] if single else z)
            posts.append(h[0] if single else h)
    out = h[0] if single else h
    return out, (ForwardTrace(pres, posts) if keep_trace else None)


def forward(net: Network, x) -> np.ndarray:
    """Evaluate the network on one input vector or a batch of row vectors."""
    return _run(net, x, keep_trace=False)[0]


def forward_with_trace(net: Network, x) -> tuple[np.ndarray, ForwardTrace]:
    return _run(net, x, keep_trace=True)


def count_parameters(net: Network) -> ParameterCount:
    layer_params = sum(l.weights.size + l.biases.size for l in net.layers)
    shortcut_params = sum(s.weights.size for s in net.shortcuts.values())
    return ParameterCount(int(layer_params), int(shortcut_params), int(layer_params + shortcut_params))


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    layers: tuple[int, ...] = ()


def validate(net: Network) -> list[Violation]:
    """Return every broken structural invariant; an empty list means valid."""
    found: list[Violation] = []
    if not net.layers:
        return [Violation("no_layers", "network has no layers")]
    if net.layers[0].in_dim != net.input_dim:
        found.append(
            Violation(
                "input_dim",
                f"input_dim {net.input_dim} != layer 0 in_dim {net.layers[0].in_dim}",
                (0,),
            )
        )
    last = len(net.layers) - 1
    for i, layer in enumerate(net.layers):
        if layer.weights.ndim != 2 or layer.biases.ndim != 1:
            found.append(Violation("rank", "weights must be 2-D and biases 1-D", (i,)))
            continue
        if layer.biases.shape[0] != layer.out_dim:
            found.append(
                Violation(
                    "bias_length",
                    f"{layer.biases.shape[0]} biases for {layer.out_dim} neurons",
                    (i,),
                )
            )
        if not (np.isfinite(layer.weights).all() and np.isfinite(layer.biases).all()):
            found.append(Violation("non_finite", "non-finite parameter", (i,)))
        if i > 0 and layer.in_dim != net.layers[i - 1].out_dim:
            found.append(
                Violation(
                    "dimension_chain",
                    f"layer {i} expects {layer.in_dim} inputs but layer {i - 1} "
                    f"has {net.layers[i - 1].out_dim} neurons",
                    (i - 1, i),
                )
            )
        if i < last and layer.activation is Activation.SOFTMAX:
            found.append(Violation("hidden_softmax", "softmax on a hidden layer", (i,)))
        if i < last and layer.out_dim == 0:
            found.append(Violation("empty_layer", "hidden layer has no neurons", (i,)))
    for index in sorted(net.shortcuts):
        sc = net.shortcuts[index]
        if index < 0 or index > last:
            found.append(
                Violation("shortcut_index", f"shortcut at nonexistent layer {index}", (index,))
            )
            continue
        if index == last:
            found.append(
                Violation(
                    "shortcut_on_output_layer",
                    "shortcut attached to the output layer has no destination",
                    (index,),
                )
            )
            continue
        if not np.isfinite(sc.weights).all():
            found.append(Violation("non_finite", "non-finite shortcut weight", (index,)))
        dest = net.layers[index + 1].out_dim
        if sc.dest_dim != dest:
            found.append(
                Violation(
                    "shortcut_dest_dim",
                    f"shortcut at {index} writes {sc.dest_dim} values, layer "
                    f"{index + 1} has {dest} neurons",
                    (index, index + 1),
                )
            )
        expected = net.expected_src_dim(index)
        if sc.src_dim != expected:
            found.append(
                Violation(
                    "shortcut_src_dim",
                    f"shortcut at {index} reads {sc.src_dim} inputs, cumulative "
                    f"input width is {expected}",
                    (index,),
                )
            )
    return found


def glorot_uniform(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


def build_network(
    input_dim: int,
    hidden: tuple[int, ...] | list[int] | str,
    output_dim: int,
    seed: int = 0,
    output_activation: Activation = Activation.SOFTMAX,
) -> Network:
    """Glorot-initialised MLP with zero biases; ``hidden`` may name a preset."""
    if isinstance(hidden, str):
        hidden = PRESETS[hidden]
    rng = np.random.default_rng(seed)
    dims = [input_dim, *hidden, output_dim]
    layers = []
    for i in range(len(dims) - 1):
        act = Activation.RELU if i < len(dims) - 2 else output_activation
        layers.append(
            DenseLayer(glorot_uniform(rng, dims[i + 1], dims[i]), np.zeros(dims[i + 1]), act)
        )
    return Network(layers, {}, input_dim)


def remove_neurons(net: Network, layer_index: int, neurons) -> Network:
    """Structurally delete neurons of a hidden layer, in place.

    Removes their rows (and biases), the matching rows of any shortcut writing
    into the layer, the matching columns of the next layer, and the matching
    columns of every downstream shortcut whose cumulative input contains this
    layer's output.
    """
    if not 0 <= layer_index < len(net.layers) - 1:
        raise IndexError(f"layer {layer_index} is not a hidden layer")
    idx = np.asarray(sorted(set(int(n) for n in neurons)), dtype=int)
    if idx.size == 0:
        return net
    layer = net.layers[layer_index]
    if idx[0] < 0 or idx[-1] >= layer.out_dim:
        raise IndexError(f"neuron index out of range for layer {layer_index}")
    consumer = layer_index + 1
    # Column edits on downstream shortcuts need the layout before any width changes.
    edits = []
    k = consumer
    while k in net.shortcuts:
        offset = next(off for i, off, _ in net.shortcut_blocks(k) if i == consumer)
        edits.append((k, offset + idx))
        k += 1
    for k, cols in edits:
        net.shortcuts[k].weights = np.delete(net.shortcuts[k].weights, cols, axis=1)
    layer.weights = np.delete(layer.weights, idx, axis=0)
    layer.biases = np.delete(layer.biases, idx)
    if layer_index - 1 in net.shortcuts:
        sc = net.shortcuts[layer_index - 1]
        sc.weights = np.delete(sc.weights, idx, axis=0)
    nxt = net.layers[consumer]
    nxt.weights = np.delete(nxt.weights, idx, axis=1)
    return net
