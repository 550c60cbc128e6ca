"""Compositional ReLU kernel of a convolutional architecture.

Level 0 compares inputs column by column, ``k_0[t] = <x_t, y_t> / d``; level
``v`` applies the ReLU dual activation to window averages of level ``v - 1``.
The top scalar averages the deepest level (the output of the feature map)
over its positions, which is what ``<Psi(x), Psi(y)>`` concentrates around.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import stats
from .convnet import NetworkSpec, feature_map, sample_network
from .harness.seeding import derive_stream
from .rotgroup import as_cloud, orbit_samples, sphere_cloud

DOMAIN_TOL = 1e-12
NORM_TOL = 1e-8


def dual_activation(u):
    """(u (pi - arccos u) + sqrt(1 - u^2)) / pi, vectorised.

    Values within ``DOMAIN_TOL`` outside [-1, 1] are clamped; anything further
    out raises ``ValueError``.
    """
    u = np.asarray(u, dtype=float)
    if np.any(np.abs(u) > 1.0 + DOMAIN_TOL) or np.any(np.isnan(u)):
        raise ValueError("dual activation is defined on [-1, 1]")
    u = np.clip(u, -1.0, 1.0)
    out = (u * (np.pi - np.arccos(u)) + np.sqrt((1.0 - u) * (1.0 + u))) / np.pi
    return out if out.ndim else float(out)


def iterate_dual(u: float, times: int) -> float:
    for _ in range(times):
        u = dual_activation(u)
    return float(u)


@dataclass(frozen=True)
class KernelEvaluation:
    levels: tuple[np.ndarray, ...]  # levels[v][t] = k_{v,t}

    @property
    def value(self) -> float:
        return float(np.mean(self.levels[-1]))


def _check_columns(x: np.ndarray, name: str):
    d = x.shape[0]
    norms = np.linalg.norm(x, axis=0)
    bad = np.nonzero(np.abs(norms - np.sqrt(d)) > NORM_TOL * np.sqrt(d))[0]
    if bad.size:
        t = int(bad[0])
        raise ValueError(f"column {t} of {name} has norm {norms[t]:.6g}, expected sqrt(d)={np.sqrt(d):.6g}")


def kernel_recursion(arch: NetworkSpec, x, y) -> KernelEvaluation:
    """Levels ``0 .. l-1`` of the kernel for inputs with sqrt(d)-norm columns."""
    x = as_cloud(x)
    y = as_cloud(y)
    if x.shape != y.shape or x.shape != arch.in_shape:
        raise ValueError(f"inputs must both have shape {arch.in_shape}")
    _check_columns(x, "x")
    _check_columns(y, "y")
    d = x.shape[0]
    k = np.einsum("dt,dt->t", x, y) / d
    levels = [k]
    for layer in arch.layers[:-1]:
        idx = np.arange(layer.out_positions)[:, None] * layer.stride + np.arange(layer.width)
        # average over the window first; rounding can push |mean| a hair past 1
        k = dual_activation(np.clip(k[idx].mean(axis=1), -1.0, 1.0))
        levels.append(np.atleast_1d(k))
    return KernelEvaluation(tuple(levels))


def empirical_kernel(spec: NetworkSpec, weights, x, y) -> float:
    """``<Psi(x), Psi(y)>`` for the sampled network."""
    return float(np.sum(feature_map(spec, weights, x) * feature_map(spec, weights, y)))


@dataclass(frozen=True)
class DeviationRow:
    channels: int
    trials: int
    mean: float
    p50: float
    p95: float
    max: float


def kernel_deviations(arch: NetworkSpec, trials: int, seed: int, index_offset: int = 0) -> np.ndarray:
    """|k - <Psi, Psi>| for ``trials`` independent (network, pair) draws.

    Trial ``i`` uses its own stream; inputs are two Haar orbit points of a
    random cloud with sqrt(d)-norm columns.
    """
    d, n = arch.in_shape
    devs = np.empty(trials)
    for i in range(trials):
        rng = derive_stream(seed, index_offset + i)
        # draw inputs before weights so the pairs match across channel counts
        x0 = sphere_cloud(d, n, rng)
        x, y = orbit_samples(x0, 2, rng)
        weights = sample_network(arch, rng)
        devs[i] = abs(kernel_recursion(arch, x, y).value - empirical_kernel(arch, weights, x, y))
    return devs


def kernel_deviation_experiment(arch: NetworkSpec, channels, trials: int, seed: int,
                                mapper=map) -> list[DeviationRow]:
    """95th-percentile kernel deviation as a function of hidden channel count."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if arch.depth < 2:
        raise ValueError("kernel comparison needs depth >= 2")
    specs = [arch.with_channels(int(c)) for c in channels]
    # same seed across channel counts: common random inputs reduce trend noise
    results = list(mapper(_deviation_job, [(s, trials, seed) for s in specs]))
    rows = []
    for c, devs in zip(channels, results):
        p50, p95 = stats.quantiles(devs, (0.5, 0.95))
        rows.append(DeviationRow(int(c), trials, stats.mean(devs), p50, p95, float(np.max(devs))))
    return rows


def _deviation_job(args):
    spec, trials, seed = args
    return kernel_deviations(spec, trials, seed)

