import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from orbitadv.convnet import (
    ACTIVATIONS,
    ConvLayerSpec,
    Network,
    NetworkSpec,
    ShapeError,
    feature_map,
    feature_scale,
    layer_forward,
    network_forward,
    sample_layer,
    sample_network,
    window,
    windows,
)

seeds = st.integers(0, 2**32 - 1)


def naive_layer(W, x, s, w, act):
    """Loop oracle: y[:, t] = act(W @ concat(x[:, t*s], ..., x[:, t*s + w - 1]))."""
    d, n = x.shape
    cols = []
    for t in range((n - w) // s + 1):
        stacked = np.concatenate([x[:, t * s + j] for j in range(w)])
        cols.append(act(W @ stacked))
    return np.stack(cols, axis=1)


@st.composite
def geometries(draw):
    w = draw(st.integers(1, 4))
    s = draw(st.integers(1, 3))
    k = draw(st.integers(0, 4))
    n = w + s * k
    d = draw(st.integers(1, 5))
    c = draw(st.integers(1, 5))
    return d, n, w, s, c


@given(geo=geometries(), act=st.sampled_from(sorted(ACTIVATIONS)), seed=seeds)
@settings(max_examples=80, deadline=None)
def test_layer_matches_loop_oracle(geo, act, seed):
    d, n, w, s, c = geo
    spec = ConvLayerSpec(d, n, w, s, c, act)
    rng = np.random.default_rng(seed)
    W = sample_layer(spec, rng)
    x = rng.standard_normal((d, n))
    out = layer_forward(spec, W, x)
    assert out.shape == (c, (n - w) // s + 1)
    np.testing.assert_allclose(out, naive_layer(W, x, s, w, ACTIVATIONS[act]), atol=1e-12)


@given(geo=geometries(), seed=seeds)
@settings(max_examples=40, deadline=None)
def test_windows_flatten_channel_fastest(geo, seed):
    d, n, w, s, _ = geo
    x = np.random.default_rng(seed).standard_normal((d, n))
    flat = windows(x[None], s, w)[0]
    for t in range(flat.shape[0]):
        np.testing.assert_array_equal(flat[t], window(x, t, s, w).flatten(order="F"))


def test_window_index_out_of_range():
    x = np.zeros((2, 5))
    assert window(x, 0, 1, 2).shape == (2, 2)
    with pytest.raises(IndexError):
        window(x, 4, 1, 2)
    with pytest.raises(ShapeError):
        window(x, 0, 2, 2)


def test_stride_must_divide():
    with pytest.raises(ShapeError, match=r"s \| n - w"):
        ConvLayerSpec(3, 6, 2, 3, 4)
    with pytest.raises(ShapeError):
        ConvLayerSpec(3, 2, 3, 1, 4)
    with pytest.raises(ShapeError):
        ConvLayerSpec(3, 4, 2, 1, 4, activation="softsign")
    with pytest.raises(ShapeError):
        ConvLayerSpec(3, 4, 2, 1, 4, init="he")


def test_spec_chaining_and_build():
    spec = NetworkSpec.build(8, 4, [dict(width=2, stride=2, out_channels=5),
                                    dict(width=None, out_channels=1, activation="identity")])
    assert spec.in_shape == (8, 4)
    assert spec.layers[1].in_positions == 2 and spec.layers[1].width == 2
    assert spec.scalar_output and spec.depth == 2
    wide = spec.with_channels(32)
    assert wide.layers[0].out_channels == 32 and wide.layers[1].in_channels == 32
    with pytest.raises(ShapeError, match="layer 1 outputs"):
        NetworkSpec((ConvLayerSpec(8, 4, 2, 2, 5), ConvLayerSpec(6, 2, 2, 1, 1)))
    with pytest.raises(ShapeError):
        NetworkSpec(())


def test_xavier_variance():
    spec = ConvLayerSpec(16, 4, 2, 2, 400)
    W = sample_layer(spec, np.random.default_rng(0))
    assert W.shape == (400, 32)
    # 12800 entries; the sample variance has relative sd sqrt(2/12800)
    assert abs(W.var() * spec.fan_in - 1) < 5 * math.sqrt(2 / W.size)
    assert abs(W.mean()) < 5 / math.sqrt(W.size * spec.fan_in)


def test_orthonormal_init():
    spec = ConvLayerSpec(4, 4, 2, 2, 6, init="orthonormal")
    W = sample_layer(spec, np.random.default_rng(1))
    np.testing.assert_allclose(W @ W.T, np.eye(6), atol=1e-12)
    with pytest.raises(ShapeError, match="out_channels <= fan_in"):
        sample_layer(ConvLayerSpec(2, 2, 1, 1, 3, init="orthonormal"), np.random.default_rng(0))


@given(seed=seeds, n_batch=st.integers(1, 5))
@settings(max_examples=30, deadline=None)
def test_batch_matches_single(seed, n_batch):
    rng = np.random.default_rng(seed)
    spec = NetworkSpec.build(6, 4, [dict(width=2, stride=1, out_channels=7),
                                    dict(width=None, out_channels=1, activation="identity")])
    net = Network.sample(spec, rng)
    X = rng.standard_normal((n_batch, 6, 4))
    batch = net(X)
    assert batch.shape == (n_batch,)
    for k in range(n_batch):
        assert net(X[k]) == pytest.approx(batch[k], abs=1e-12)
        assert isinstance(net(X[k]), float)


@given(seed=seeds, c=st.floats(0.01, 100))
@settings(max_examples=30, deadline=None)
def test_relu_network_positively_homogeneous(seed, c):
    rng = np.random.default_rng(seed)
    spec = NetworkSpec.build(5, 4, [dict(width=2, stride=2, out_channels=6),
                                    dict(width=None, out_channels=1, activation="identity")])
    w = sample_network(spec, rng)
    x = rng.standard_normal((5, 4))
    assert network_forward(spec, w, c * x) == pytest.approx(c * network_forward(spec, w, x), rel=1e-9, abs=1e-12)


@given(seed=seeds)
@settings(max_examples=30, deadline=None)
def test_odd_network_is_odd(seed):
    rng = np.random.default_rng(seed)
    spec = NetworkSpec.build(6, 4, [dict(width=2, stride=2, out_channels=6, activation="tanh"),
                                    dict(width=None, out_channels=1, activation="identity")])
    w = sample_network(spec, rng)
    x = rng.standard_normal((6, 4))
    assert network_forward(spec, w, -x) == pytest.approx(-network_forward(spec, w, x), abs=1e-12)


def test_feature_scale_and_norm():
    spec = NetworkSpec.build(32, 4, [dict(width=2, stride=2, out_channels=64),
                                     dict(width=None, out_channels=1, activation="identity")])
    assert feature_scale(spec) == pytest.approx(math.sqrt(2 / (2 * 64)))
    rng = np.random.default_rng(3)
    x = rng.standard_normal((32, 4))
    x *= math.sqrt(32) / np.linalg.norm(x, axis=0)
    # E |Psi(x)|^2 = 1 for sqrt(d)-norm columns (each ReLU unit has E relu(g)^2 = 1/2)
    sq = [np.sum(feature_map(spec, sample_network(spec, rng), x) ** 2) for _ in range(400)]
    assert abs(np.mean(sq) - 1) < 5 * np.std(sq) / math.sqrt(len(sq))


def test_forward_shape_errors():
    spec = NetworkSpec.build(4, 2, [dict(width=None, out_channels=3)])
    w = sample_network(spec, np.random.default_rng(0))
    with pytest.raises(ShapeError, match="scalar"):
        network_forward(spec, w, np.zeros((4, 2)))
    with pytest.raises(ShapeError):
        layer_forward(spec.layers[0], w[0], np.zeros((5, 2)))
    with pytest.raises(ShapeError):
        feature_scale(spec)
