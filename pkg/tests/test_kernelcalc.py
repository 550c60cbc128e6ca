import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from orbitadv.convnet import NetworkSpec, sample_network
from orbitadv.kernelcalc import (
    DeviationRow,
    dual_activation,
    empirical_kernel,
    iterate_dual,
    kernel_deviation_experiment,
    kernel_recursion,
)
from orbitadv.rotgroup import sphere_cloud

seeds = st.integers(0, 2**32 - 1)


def two_layer(d=16, n=4, c=64, w=2, s=2):
    return NetworkSpec.build(d, n, [dict(width=w, stride=s, out_channels=c),
                                    dict(width=None, out_channels=1, activation="identity")])


def mp_dual(u):
    u = mpmath.mpf(u)
    return (u * (mpmath.pi - mpmath.acos(u)) + mpmath.sqrt(1 - u * u)) / mpmath.pi


def test_dual_activation_exact_points():
    assert abs(dual_activation(1.0) - 1.0) <= 1e-12
    assert abs(dual_activation(-1.0)) <= 1e-12
    assert abs(dual_activation(0.0) - 1 / math.pi) <= 1e-12


def test_dual_activation_against_high_precision():
    mpmath.mp.dps = 50
    for u in [0.5, -0.3, 0.9, 0.999, -0.75]:
        assert abs(dual_activation(u) - float(mp_dual(u))) <= 1e-14


def test_dual_activation_is_gaussian_relu_correlation():
    # 2 E[relu(g1) relu(g2)] for unit Gaussians with correlation u
    rng = np.random.default_rng(0)
    N = 400_000
    for u in [-0.6, 0.2, 0.8]:
        g1 = rng.standard_normal(N)
        g2 = u * g1 + math.sqrt(1 - u * u) * rng.standard_normal(N)
        prod = 2 * np.maximum(g1, 0) * np.maximum(g2, 0)
        assert abs(prod.mean() - dual_activation(u)) < 5 * prod.std() / math.sqrt(N)


@given(u=st.floats(-1, 1), v=st.floats(-1, 1))
def test_dual_activation_shape(u, v):
    fu = dual_activation(u)
    assert 0.0 <= fu <= 1.0 + 1e-15
    assert fu >= u - 1e-15
    if u < v:
        assert fu <= dual_activation(v) + 1e-15


def test_dual_activation_domain():
    assert dual_activation(1 + 1e-13) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        dual_activation(1.01)
    with pytest.raises(ValueError):
        dual_activation(float("nan"))
    out = dual_activation(np.array([[0.0, 1.0]]))
    assert out.shape == (1, 2)
    assert iterate_dual(0.5, 0) == 0.5
    assert iterate_dual(0.5, 2) == pytest.approx(dual_activation(dual_activation(0.5)))


@given(d=st.integers(2, 12), k=st.integers(0, 3), seed=seeds)
@settings(max_examples=50, deadline=None)
def test_kernel_diagonal_is_one(d, k, seed):
    n = 2 + 2 * k
    arch = two_layer(d, n, 8)
    x = sphere_cloud(d, n, np.random.default_rng(seed))
    ev = kernel_recursion(arch, x, x)
    assert abs(ev.value - 1.0) <= 1e-12
    for level in ev.levels:
        np.testing.assert_allclose(level, 1.0, atol=1e-12)


@given(seed=seeds)
@settings(max_examples=30, deadline=None)
def test_kernel_symmetric_and_bounded(seed):
    rng = np.random.default_rng(seed)
    arch = two_layer(8, 4, 8)
    x, y = sphere_cloud(8, 4, rng), sphere_cloud(8, 4, rng)
    a = kernel_recursion(arch, x, y).value
    assert a == pytest.approx(kernel_recursion(arch, y, x).value, abs=1e-15)
    assert 0.0 <= a <= 1.0


def test_kernel_levels_by_hand():
    d = 4
    arch = NetworkSpec.build(d, 4, [dict(width=2, stride=1, out_channels=3),
                                    dict(width=2, stride=1, out_channels=3),
                                    dict(width=None, out_channels=1, activation="identity")])
    rng = np.random.default_rng(5)
    x, y = sphere_cloud(d, 4, rng), sphere_cloud(d, 4, rng)
    k0 = np.array([x[:, t] @ y[:, t] / d for t in range(4)])
    k1 = np.array([dual_activation((k0[t] + k0[t + 1]) / 2) for t in range(3)])
    k2 = np.array([dual_activation((k1[t] + k1[t + 1]) / 2) for t in range(2)])
    ev = kernel_recursion(arch, x, y)
    assert len(ev.levels) == 3
    np.testing.assert_allclose(ev.levels[2], k2, atol=1e-15)
    assert ev.value == pytest.approx(k2.mean(), abs=1e-15)


def test_kernel_rejects_unnormalised_columns():
    arch = two_layer(4, 2, 3, w=2, s=1)
    x = sphere_cloud(4, 2, np.random.default_rng(0))
    y = x.copy()
    y[:, 1] *= 1.5
    with pytest.raises(ValueError, match="column 1 of y"):
        kernel_recursion(arch, x, y)
    with pytest.raises(ValueError):
        kernel_recursion(arch, x, x[:, :1])


def test_empirical_kernel_is_unbiased():
    # for l = 2 the network average of <Psi(x), Psi(y)> equals the kernel exactly
    arch = two_layer(16, 4, 32)
    rng = np.random.default_rng(7)
    x, y = sphere_cloud(16, 4, rng), sphere_cloud(16, 4, rng)
    vals = [empirical_kernel(arch, sample_network(arch, rng), x, y) for _ in range(500)]
    k = kernel_recursion(arch, x, y).value
    assert abs(np.mean(vals) - k) < 5 * np.std(vals) / math.sqrt(len(vals))


def test_deviation_experiment_shrinks_with_width():
    arch = two_layer(32, 4, 8)
    rows = kernel_deviation_experiment(arch, [8, 512], 40, seed=3)
    assert [r.channels for r in rows] == [8, 512]
    assert all(isinstance(r, DeviationRow) and r.trials == 40 for r in rows)
    assert rows[1].p95 < rows[0].p95
    assert rows[0].p50 <= rows[0].p95 <= rows[0].max
    again = kernel_deviation_experiment(arch, [8, 512], 40, seed=3)
    assert rows == again


def test_deviation_experiment_errors():
    with pytest.raises(ValueError):
        kernel_deviation_experiment(two_layer(), [8], 0, seed=0)
    shallow = NetworkSpec.build(4, 2, [dict(width=None, out_channels=1, activation="identity")])
    with pytest.raises(ValueError):
        kernel_deviation_experiment(shallow, [8], 3, seed=0)
