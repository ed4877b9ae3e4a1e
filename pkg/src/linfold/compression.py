"""Fold linearly-behaving ReLU neurons into shortcut connections."""
from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .network import Network, Shortcut, count_parameters, remove_neurons
from .profiling import ActivationProfile, detect_provable_linear


class LayerMode(str, enum.Enum):
    NONE = "none"
    ABSOLUTE = "absolute"
    OPTIMAL = "optimal"


@dataclass(frozen=True)
class CompressionConfig:
    activation_threshold: float = 1.0
    layer_mode: LayerMode = LayerMode.OPTIMAL
    min_linear: int = 0  # only read in ABSOLUTE mode
    force_provable: bool = True

    def __post_init__(self):
        if not 0.0 <= self.activation_threshold <= 1.0:
            raise ValueError(f"activation threshold {self.activation_threshold} not in [0, 1]")
        if self.min_linear < 0:
            raise ValueError("absolute layer threshold must be >= 0")

    @classmethod
    def parse_mode(cls, text: str) -> tuple[LayerMode, int]:
        """Parse ``none``, ``optimal`` or ``abs:K``."""
        text = text.strip().lower()
        if text in ("none", "optimal"):
            return LayerMode(text), 0
        if text.startswith("abs:"):
            k = int(text[4:])
            if k < 0:
                raise ValueError("abs:K needs K >= 0")
            return LayerMode.ABSOLUTE, k
        raise ValueError(f"unknown layer mode {text!r}; use none, optimal or abs:K")


@dataclass
class LayerPlan:
    layer_index: int
    selected: list[int]
    survivors: list[int]
    candidates: int = 0  # selection size before the layer gate


def optimal_layer_threshold(w_prev: int, w_next: int) -> int:
    """Smallest number of linear neurons for which a fold does not grow the model."""
    if w_prev < 1 or w_next < 1:
        raise ValueError("layer widths must be >= 1")
    num = w_prev * w_next
    den = w_prev + 1 + w_next
    return -(-num // den)


def parameter_delta(w_prev: int, w_next: int, n_linear: int) -> int:
    """Parameter change of folding ``n_linear`` neurons; negative means smaller."""
    return w_prev * w_next - n_linear * (w_prev + 1 + w_next)


def _adjacent_widths(net: Network, layer_index: int) -> tuple[int, int]:
    return net.layers[layer_index].in_dim, net.layers[layer_index + 1].out_dim


def _gate(n: int, w_prev: int, w_next: int, cfg: CompressionConfig) -> bool:
    if n == 0:
        return False
    if cfg.layer_mode is LayerMode.ABSOLUTE:
        return n >= cfg.min_linear
    if cfg.layer_mode is LayerMode.OPTIMAL:
        return n >= optimal_layer_threshold(w_prev, w_next)
    return True


def candidates(profile: ActivationProfile, threshold: float) -> list[list[int]]:
    return [np.flatnonzero(r >= threshold).tolist() for r in profile.rates]


def select_linear(
    net: Network, profile: ActivationProfile, cfg: CompressionConfig
) -> list[LayerPlan]:
    """One plan per hidden layer; gated-out layers get an empty selection."""
    if profile.widths() != net.widths()[:-1]:
        raise ValueError(
            f"profile widths {profile.widths()} do not match network {net.widths()[:-1]}"
        )
    chosen = candidates(profile, cfg.activation_threshold)
    if cfg.force_provable:
        for i, j in detect_provable_linear(net):
            if j not in chosen[i]:
                chosen[i] = sorted(chosen[i] + [j])
    plans = []
    for i, sel in enumerate(chosen):
        width = net.layers[i].out_dim
        keep = _gate(len(sel), *_adjacent_widths(net, i), cfg)
        picked = sel if keep else []
        survivors = [j for j in range(width) if j not in set(picked)]
        plans.append(LayerPlan(i, list(picked), survivors, len(sel)))
    return plans


def fold_layer(net: Network, plan: LayerPlan) -> Network:
    """Return a copy of ``net`` with the selected neurons folded into a shortcut.

    Each selected neuron is assumed to be exactly linear, so its contribution
    to the next layer is rerouted through a shortcut reading the layer's
    (cumulative) input, and its bias contribution moves into the next layer's
    biases. A layer left without neurons is removed, its shortcut becoming the
    next layer's regular weights.
    """
    L = plan.layer_index
    if not 0 <= L < len(net.layers) - 1:
        raise IndexError(f"layer {L} is not a hidden layer; the output layer cannot be folded")
    sel = np.asarray(sorted(set(plan.selected)), dtype=int)
    if sel.size == 0:
        raise ValueError("fold_layer needs a non-empty selection")
    layer = net.layers[L]
    if sel[0] < 0 or sel[-1] >= layer.out_dim:
        raise IndexError(f"neuron index out of range for layer {L} of width {layer.out_dim}")

    net = net.copy()
    layer = net.layers[L]
    nxt = net.layers[L + 1]
    n_in = layer.in_dim

    # Selected pre-activations as an affine map of the layer's cumulative input.
    affine = layer.weights[sel]
    incoming = net.shortcuts.get(L - 1)
    if incoming is not None:
        affine = np.hstack([affine, incoming.weights[sel]])
    bias = layer.biases[sel]
    width_u = affine.shape[1]

    if L not in net.shortcuts:
        # A new shortcut at L extends the cumulative input of any chain above it.
        k = L + 1
        while k in net.shortcuts:
            w = net.shortcuts[k].weights
            net.shortcuts[k].weights = np.hstack([w, np.zeros((w.shape[0], width_u))])
            k += 1
        net.shortcuts[L] = Shortcut(np.zeros((nxt.out_dim, width_u)))

    out_w = nxt.weights[:, sel]
    net.shortcuts[L].weights = net.shortcuts[L].weights + out_w @ affine
    nxt.biases = nxt.biases + out_w @ bias

    # Downstream chain shortcuts that read this layer's output directly.
    k = L + 1
    while k in net.shortcuts:
        blocks = {i: off for i, off, _ in net.shortcut_blocks(k)}
        sc = net.shortcuts[k]
        cols = sc.weights[:, blocks[L + 1] + sel]
        u0 = blocks[L]
        sc.weights[:, u0 : u0 + width_u] += cols @ affine
        net.layers[k + 1].biases = net.layers[k + 1].biases + cols @ bias
        k += 1

    remove_neurons(net, L, sel)
    if net.layers[L].out_dim == 0:
        _drop_empty_layer(net, L, n_in)
    return net


def _drop_empty_layer(net: Network, L: int, n_in: int) -> None:
    folded = net.shortcuts.pop(L).weights
    nxt = net.layers[L + 1]
    nxt.weights = folded[:, :n_in].copy()
    if L - 1 in net.shortcuts:
        net.shortcuts[L - 1] = Shortcut(folded[:, n_in:].copy())
    del net.layers[L]
    net.shortcuts = {(k - 1 if k > L else k): v for k, v in net.shortcuts.items()}


@dataclass
class LayerFold:
    original_layer: int
    current_layer: int
    candidates: int
    selected: int
    folded: bool
    w_prev: int
    w_next: int
    predicted_delta: int | None
    measured_delta: int | None
    layer_removed: bool = False
    consecutive: bool = False  # layer already received a shortcut when folded
    fold_w_prev: int | None = None  # adjacent widths at fold time
    fold_w_next: int | None = None


@dataclass
class CompressionSummary:
    activation_threshold: float
    layer_mode: str
    params_before: dict
    params_after: dict
    layers: list[LayerFold] = field(default_factory=list)

    @property
    def folds(self) -> int:
        return sum(1 for f in self.layers if f.folded)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"


def compress(
    net: Network, profile: ActivationProfile, cfg: CompressionConfig
) -> tuple[Network, CompressionSummary]:
    """Fold every gated selection, first hidden layer to last, in one pass.

    ``profile`` must describe ``net`` itself. Selection and gating both use
    the widths of ``net`` as given; upstream folds do not re-open the gate.
    """
    plans = select_linear(net, profile, cfg)
    before = count_parameters(net)
    summary = CompressionSummary(
        cfg.activation_threshold, cfg.layer_mode.value, before._asdict(), {}
    )
    out = net
    removed_layers = 0
    for plan in plans:
        cur = plan.layer_index - removed_layers
        w_prev, w_next = _adjacent_widths(net, plan.layer_index)
        n = len(plan.selected)
        record = LayerFold(plan.layer_index, cur, plan.candidates, n, n > 0,
                           w_prev, w_next, None, None)
        if n:
            record.predicted_delta = parameter_delta(w_prev, w_next, n)
            record.consecutive = cur - 1 in out.shortcuts
            record.fold_w_prev, record.fold_w_next = _adjacent_widths(out, cur)
            size = count_parameters(out).total
            out = fold_layer(out, LayerPlan(cur, plan.selected, plan.survivors))
            record.measured_delta = count_parameters(out).total - size
            if not plan.survivors:
                record.layer_removed = True
                removed_layers += 1
        summary.layers.append(record)
    if out is net:
        out = net.copy()
    summary.params_after = count_parameters(out)._asdict()
    return out, summary
