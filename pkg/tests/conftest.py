import numpy as np
import pytest

from linfold.network import Activation, build_network, forward_with_trace

_CRITERIA: list[tuple[int, str, str]] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is not None and rep.when == "call":
        _CRITERIA.append((marker.args[0], marker.args[1], rep.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, outcome in sorted(_CRITERIA):
        word = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{word}] criterion {number}: {title}")


def random_net(rng, n_hidden=(3, 6), width=(4, 32), input_dim=6, output_dim=3,
               bias_scale=0.3, seed=None):
    """Glorot net with random biases; sizes drawn from inclusive ranges."""
    depth = int(rng.integers(n_hidden[0], n_hidden[1] + 1))
    widths = tuple(int(w) for w in rng.integers(width[0], width[1] + 1, size=depth))
    net = build_network(input_dim, widths, output_dim,
                        seed=int(rng.integers(2**31)) if seed is None else seed)
    for layer in net.layers:
        layer.biases = rng.normal(0.0, bias_scale, layer.out_dim)
    return net


def force_active(net, x, layer_index, neurons=None, margin=0.5):
    """Raise biases so the chosen neurons have pre-activation >= margin on every row of x."""
    _, trace = forward_with_trace(net, x)
    z = trace.pre_activations[layer_index]
    idx = np.arange(z.shape[1]) if neurons is None else np.asarray(neurons)
    lift = np.maximum(0.0, margin - z[:, idx].min(axis=0))
    net.layers[layer_index].biases[idx] += lift
    return net


def identity_net(dim, depth=2):
    from linfold.network import DenseLayer, Network

    layers = [DenseLayer(np.eye(dim), np.zeros(dim), Activation.IDENTITY) for _ in range(depth)]
    return Network(layers, {}, dim)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
