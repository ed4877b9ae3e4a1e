import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from linfold.compression import (
    CompressionConfig,
    LayerMode,
    LayerPlan,
    candidates,
    compress,
    fold_layer,
    optimal_layer_threshold,
    parameter_delta,
    select_linear,
)
from linfold.network import (
    Activation,
    DenseLayer,
    Network,
    build_network,
    count_parameters,
    forward,
    validate,
)
from linfold.profiling import ActivationProfile, activation_rates

from conftest import force_active, random_net


def brute_force_threshold(w_prev, w_next):
    n = 1
    while w_prev * w_next > n * (w_prev + 1 + w_next):
        n += 1
    return n


def fake_profile(net, rates_by_layer=None):
    rates = [np.zeros(l.out_dim) for l in net.layers[:-1]]
    for i, r in (rates_by_layer or {}).items():
        rates[i] = np.asarray(r, float)
    return ActivationProfile(rates, 1)


@pytest.mark.parametrize("w_prev,w_next,expected", [(100, 100, 50), (1, 1, 1), (3, 3, 2), (784, 1024, 444)])
def test_optimal_threshold_examples(w_prev, w_next, expected):
    assert optimal_layer_threshold(w_prev, w_next) == expected


def test_optimal_threshold_matches_enumeration():
    for a in range(1, 41):
        for b in range(1, 41):
            assert optimal_layer_threshold(a, b) == brute_force_threshold(a, b)


def test_single_neuron_in_width_three_grows():
    assert parameter_delta(3, 3, 1) == 9 - 7 > 0


@pytest.mark.parametrize("args,expected", [((100, 100, 50), -50), ((2, 2, 1), -1), ((100, 100, 1), 9799)])
def test_parameter_delta_examples(args, expected):
    assert parameter_delta(*args) == expected


def _gate_net(width_before, layer_width, width_after):
    return build_network(width_before, (layer_width, width_after), 2, seed=0)


@pytest.mark.parametrize("n,kept", [(49, False), (50, True)])
def test_optimal_gate_at_100_100(n, kept):
    net = _gate_net(100, 60, 100)
    rates = np.zeros(60)
    rates[:n] = 1.0
    plans = select_linear(net, fake_profile(net, {0: rates}),
                          CompressionConfig(1.0, LayerMode.OPTIMAL, force_provable=False))
    assert plans[0].candidates == n
    assert (len(plans[0].selected) == n) is kept


def test_zero_delta_fold_is_kept():
    # 4*5 == 2*(4+1+5): folding two neurons leaves the size unchanged.
    net = _gate_net(4, 6, 5)
    rates = np.array([1, 1, 0, 0, 0, 0], float)
    prof = fake_profile(net, {0: rates})
    plans = select_linear(net, prof, CompressionConfig(1.0, LayerMode.OPTIMAL, force_provable=False))
    assert plans[0].selected == [0, 1]
    out, summary = compress(net, prof, CompressionConfig(1.0, LayerMode.OPTIMAL, force_provable=False))
    assert summary.layers[0].measured_delta == 0
    assert count_parameters(out).total == count_parameters(net).total


def test_absolute_gate():
    net = _gate_net(4, 6, 5)
    prof = fake_profile(net, {0: [1, 1, 1, 0, 0, 0]})
    three = CompressionConfig(1.0, LayerMode.ABSOLUTE, 3, force_provable=False)
    four = CompressionConfig(1.0, LayerMode.ABSOLUTE, 4, force_provable=False)
    assert len(select_linear(net, prof, three)[0].selected) == 3
    assert select_linear(net, prof, four)[0].selected == []


def test_parse_mode():
    assert CompressionConfig.parse_mode("abs:3") == (LayerMode.ABSOLUTE, 3)
    assert CompressionConfig.parse_mode("optimal") == (LayerMode.OPTIMAL, 0)
    with pytest.raises(ValueError):
        CompressionConfig.parse_mode("abs:x")


def test_threshold_one_without_rate_one_neurons_is_identity(rng):
    net = random_net(rng)
    prof = fake_profile(net, {i: np.full(l.out_dim, 0.99) for i, l in enumerate(net.layers[:-1])})
    out, summary = compress(net, prof, CompressionConfig(1.0, LayerMode.OPTIMAL, force_provable=False))
    assert summary.folds == 0
    assert out is not net
    x = rng.normal(size=(10, 6))
    np.testing.assert_array_equal(forward(out, x), forward(net, x))


def test_fold_scalar_hand_expansion():
    hidden = DenseLayer(np.array([[2.0, 3.0], [1.0, -1.0]]), np.array([1.0, 0.0]))
    nxt = DenseLayer(np.array([[0.5, 0.25]]), np.array([0.0]))
    out = DenseLayer(np.array([[1.0]]), np.array([0.0]), Activation.IDENTITY)
    net = Network([hidden, nxt, out])
    folded = fold_layer(net, LayerPlan(0, [0], [1]))
    np.testing.assert_array_equal(folded.shortcuts[0].weights, [[1.0, 1.5]])
    assert folded.layers[1].biases[0] == 0.5
    np.testing.assert_array_equal(folded.layers[0].weights, [[1.0, -1.0]])
    np.testing.assert_array_equal(folded.layers[1].weights, [[0.25]])
    assert validate(folded) == []
    assert len(net.layers[0].biases) == 2  # input untouched


def test_fold_whole_layer_removes_it(rng):
    net = random_net(rng, n_hidden=(4, 4), width=(4, 9))
    x = rng.normal(size=(100, 6))
    force_active(net, x, 1)
    folded = fold_layer(net, LayerPlan(1, list(range(net.layers[1].out_dim)), []))
    assert len(folded.layers) == len(net.layers) - 1
    assert validate(folded) == []
    np.testing.assert_allclose(forward(folded, x), forward(net, x), rtol=0, atol=1e-9)


def test_fold_errors():
    net = build_network(3, (4,), 2)
    with pytest.raises(IndexError):
        fold_layer(net, LayerPlan(1, [0], [1]))
    with pytest.raises(IndexError):
        fold_layer(net, LayerPlan(0, [7], []))
    with pytest.raises(ValueError):
        fold_layer(net, LayerPlan(0, [], [0, 1, 2, 3]))


def test_compress_forced_layer_shrinks_and_matches(rng):
    net = build_network(6, (8, 30, 8), 3, seed=1)
    x = rng.normal(size=(150, 6))
    force_active(net, x, 1)
    prof = activation_rates(net, x)
    out, summary = compress(net, prof, CompressionConfig(1.0, LayerMode.OPTIMAL))
    assert any(f.folded and f.original_layer == 1 for f in summary.layers)
    assert count_parameters(out).total < count_parameters(net).total
    np.testing.assert_allclose(forward(out, x), forward(net, x), rtol=0, atol=1e-9)


def test_two_adjacent_full_folds_compose(rng):
    net = build_network(5, (6, 7, 8, 6), 3, seed=4)
    x = rng.normal(size=(120, 5))
    force_active(net, x, 1)
    force_active(net, x, 2)
    prof = activation_rates(net, x)
    out, summary = compress(net, prof, CompressionConfig(1.0, LayerMode.NONE))
    assert [f.layer_removed for f in summary.layers][1:3] == [True, True]
    assert len(out.layers) == len(net.layers) - 2
    np.testing.assert_allclose(forward(out, x), forward(net, x), rtol=0, atol=1e-9)


def test_partial_consecutive_folds_keep_chain(rng):
    net = build_network(5, (6, 7, 8, 6), 3, seed=5)
    x = rng.normal(size=(120, 5))
    force_active(net, x, 1, neurons=[0, 2, 4])
    force_active(net, x, 2, neurons=[1, 3])
    out, summary = compress(net, activation_rates(net, x), CompressionConfig(1.0, LayerMode.NONE))
    assert any(f.consecutive for f in summary.layers)
    assert any(k + 1 in out.shortcuts for k in out.shortcuts)
    np.testing.assert_allclose(forward(out, x), forward(net, x), rtol=0, atol=1e-9)


def test_provable_neurons_fold_exactly_for_all_inputs(rng):
    net = random_net(rng, n_hidden=(4, 4), width=(6, 10))
    for L in (1, 2):
        net.layers[L].weights[:3] = np.abs(net.layers[L].weights[:3])
        net.layers[L].biases[:3] = np.abs(net.layers[L].biases[:3])
    out, summary = compress(net, fake_profile(net), CompressionConfig(1.0, LayerMode.NONE))
    assert summary.folds >= 2
    x = rng.normal(scale=20.0, size=(500, 6))
    np.testing.assert_allclose(forward(out, x), forward(net, x), rtol=0, atol=1e-9)


@st.composite
def forced_cases(draw):
    rng = np.random.default_rng(draw(st.integers(0, 2**31 - 1)))
    net = random_net(rng, n_hidden=(2, 5), width=(2, 12))
    x = rng.normal(size=(60, 6))
    for L in range(net.n_hidden):
        if draw(st.booleans()):
            mask = rng.random(net.layers[L].out_dim) < draw(st.floats(0.1, 1.0))
            force_active(net, x, L, np.flatnonzero(mask))
    return net, x


@settings(max_examples=60, deadline=None)
@given(forced_cases(), st.sampled_from(list(LayerMode)))
def test_exactness_on_profiled_inputs(case, mode):
    net, x = case
    cfg = CompressionConfig(1.0, mode, 2)
    out, _ = compress(net, activation_rates(net, x), cfg)
    assert validate(out) == []
    np.testing.assert_allclose(forward(out, x), forward(net, x), rtol=0, atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_monotone_selection(seed, t1, t2):
    rng = np.random.default_rng(seed)
    rates = [rng.integers(0, 11, size=int(rng.integers(1, 9))) / 10 for _ in range(3)]
    prof = ActivationProfile(rates, 10)
    lo, hi = sorted((t1, t2))
    for a, b in zip(candidates(prof, hi), candidates(prof, lo)):
        assert set(a) <= set(b)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.05, 1.0))
def test_isolated_folds_follow_delta_and_size_law(seed, threshold):
    rng = np.random.default_rng(seed)
    net = random_net(rng, n_hidden=(2, 5), width=(2, 24))
    rates = [rng.random(l.out_dim) ** 0.3 for l in net.layers[:-1]]
    out, summary = compress(net, ActivationProfile(rates, 1),
                            CompressionConfig(threshold, LayerMode.OPTIMAL, force_provable=False))
    isolated = True
    for f in summary.layers:
        if not f.folded:
            continue
        if f.consecutive or (f.fold_w_prev, f.fold_w_next) != (f.w_prev, f.w_next):
            isolated = False
            continue
        assert f.measured_delta == f.predicted_delta <= 0
    if isolated:
        assert count_parameters(out).total <= count_parameters(net).total
