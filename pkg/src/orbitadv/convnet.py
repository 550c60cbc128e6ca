"""Random one-dimensional convolutional networks on point clouds.

A layer maps ``(d_in, n_in)`` clouds to ``(d_out, n_out)`` clouds. Window ``t``
(0-based, t = 0 .. (n_in - w)/s) is the ``w`` consecutive columns starting at
column ``t*s``; it is flattened position by position with channels fastest,
i.e. ``window.flatten(order="F")``, and multiplied by the shared weight matrix.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .rotgroup import as_cloud

ACTIVATIONS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "relu": lambda z: np.maximum(z, 0.0),
    "identity": lambda z: z,
    "tanh": np.tanh,
    "arctan": np.arctan,
}
ODD_ACTIVATIONS = frozenset({"identity", "tanh", "arctan"})
INIT_KINDS = ("xavier", "orthonormal")


class ShapeError(ValueError):
    pass


def register_activation(name: str, fn: Callable[[np.ndarray], np.ndarray], odd: bool = False):
    """Add an entrywise activation; ``odd`` marks it usable for odd-network runs."""
    global ODD_ACTIVATIONS
    ACTIVATIONS[name] = fn
    if odd:
        ODD_ACTIVATIONS = ODD_ACTIVATIONS | {name}


@dataclass(frozen=True)
class ConvLayerSpec:
    in_channels: int
    in_positions: int
    width: int
    stride: int
    out_channels: int
    activation: str = "relu"
    init: str = "xavier"

    def __post_init__(self):
        for name in ("in_channels", "in_positions", "width", "stride", "out_channels"):
            if int(getattr(self, name)) < 1:
                raise ShapeError(f"{name} must be a positive integer")
        if self.width > self.in_positions:
            raise ShapeError(f"width {self.width} exceeds input positions {self.in_positions}")
        if (self.in_positions - self.width) % self.stride:
            raise ShapeError(
                f"stride {self.stride} must divide in_positions - width = "
                f"{self.in_positions - self.width} (convolution requires s | n - w)"
            )
        if self.activation not in ACTIVATIONS:
            raise ShapeError(f"unknown activation {self.activation!r}")
        if self.init not in INIT_KINDS:
            raise ShapeError(f"unknown init kind {self.init!r}")

    @property
    def out_positions(self) -> int:
        return (self.in_positions - self.width) // self.stride + 1

    @property
    def fan_in(self) -> int:
        return self.in_channels * self.width


@dataclass(frozen=True)
class NetworkSpec:
    layers: tuple[ConvLayerSpec, ...]

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ShapeError("a network needs at least one layer")
        for v, (a, b) in enumerate(zip(layers, layers[1:]), start=1):
            if (a.out_channels, a.out_positions) != (b.in_channels, b.in_positions):
                raise ShapeError(
                    f"layer {v} outputs ({a.out_channels}, {a.out_positions}) but layer {v + 1} "
                    f"expects ({b.in_channels}, {b.in_positions})"
                )
        object.__setattr__(self, "layers", layers)

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def in_shape(self) -> tuple[int, int]:
        return self.layers[0].in_channels, self.layers[0].in_positions

    @property
    def scalar_output(self) -> bool:
        last = self.layers[-1]
        return last.out_channels == 1 and last.out_positions == 1

    @classmethod
    def build(cls, d: int, n: int, layers: Sequence[dict]) -> "NetworkSpec":
        """Chain layer dicts (width, stride, out_channels, ...) from input shape (d, n).

        ``width=None`` means fully connected over the incoming positions.
        """
        specs = []
        ch, pos = d, n
        for kw in layers:
            kw = dict(kw)
            if kw.get("width") is None:
                kw["width"] = pos
                kw.setdefault("stride", 1)
            spec = ConvLayerSpec(in_channels=ch, in_positions=pos, **kw)
            specs.append(spec)
            ch, pos = spec.out_channels, spec.out_positions
        return cls(tuple(specs))

    def with_channels(self, channels: int) -> "NetworkSpec":
        """Same architecture with every hidden layer widened to ``channels``."""
        layers = []
        prev = None
        for i, layer in enumerate(self.layers):
            out = layer.out_channels if i == self.depth - 1 else channels
            in_ch = layer.in_channels if prev is None else prev
            layer = ConvLayerSpec(in_ch, layer.in_positions, layer.width, layer.stride, out,
                                  layer.activation, layer.init)
            layers.append(layer)
            prev = out
        return NetworkSpec(tuple(layers))


def window(x, i: int, s: int, w: int) -> np.ndarray:
    """Columns ``i*s .. i*s + w - 1`` of the cloud (0-based window index)."""
    X = as_cloud(x)
    n = X.shape[1]
    if w > n or (n - w) % s:
        raise ShapeError(f"invalid window geometry n={n}, w={w}, s={s}")
    if not 0 <= i <= (n - w) // s:
        raise IndexError(f"window index {i} outside 0..{(n - w) // s}")
    return X[:, i * s : i * s + w]


def windows(X: np.ndarray, s: int, w: int) -> np.ndarray:
    """All flattened windows of a batch ``(N, d, n)`` -> ``(N, n_out, w*d)``."""
    N, d, n = X.shape
    views = np.lib.stride_tricks.sliding_window_view(X, w, axis=2)[:, :, ::s, :]
    # (N, d, n_out, w) -> (N, n_out, w, d): channel index fastest after flattening
    return views.transpose(0, 2, 3, 1).reshape(N, -1, w * d)


def _forward(spec: ConvLayerSpec, W: np.ndarray, X: np.ndarray) -> np.ndarray:
    if X.shape[1:] != (spec.in_channels, spec.in_positions):
        raise ShapeError(
            f"layer expects ({spec.in_channels}, {spec.in_positions}) input, got {X.shape[1:]}"
        )
    if W.shape != (spec.out_channels, spec.fan_in):
        raise ShapeError(f"weights must be {(spec.out_channels, spec.fan_in)}, got {W.shape}")
    pre = windows(X, spec.stride, spec.width) @ W.T
    return ACTIVATIONS[spec.activation](pre).transpose(0, 2, 1)


def _batched(x) -> tuple[np.ndarray, bool]:
    X = np.asarray(x, dtype=float)
    if X.ndim == 2:
        return X[None], True
    if X.ndim != 3:
        raise ShapeError(f"expected (d, n) or (N, d, n) input, got shape {X.shape}")
    return X, False


def layer_forward(spec: ConvLayerSpec, W, x) -> np.ndarray:
    """Apply one convolutional layer to a cloud or a batch of clouds."""
    X, single = _batched(x)
    out = _forward(spec, np.asarray(W, dtype=float), X)
    return out[0] if single else out


def sample_layer(spec: ConvLayerSpec, rng: np.random.Generator) -> np.ndarray:
    if spec.init == "xavier":
        return rng.standard_normal((spec.out_channels, spec.fan_in)) / np.sqrt(spec.fan_in)
    if spec.out_channels > spec.fan_in:
        raise ShapeError(
            f"orthonormal rows need out_channels <= fan_in ({spec.out_channels} > {spec.fan_in})"
        )
    G = rng.standard_normal((spec.fan_in, spec.out_channels))
    Q, R = np.linalg.qr(G)
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return (Q * signs).T


def sample_network(spec: NetworkSpec, rng: np.random.Generator) -> list[np.ndarray]:
    """Independent weight matrices, one per layer, in layer order."""
    return [sample_layer(layer, rng) for layer in spec.layers]


def _run_layers(layers, weights, X):
    for layer, W in zip(layers, weights):
        X = _forward(layer, W, X)
    return X


def network_forward(spec: NetworkSpec, weights, x):
    """Scalar network output for a cloud (float) or a batch (``(N,)`` array)."""
    if not spec.scalar_output:
        raise ShapeError("network does not end in a scalar output")
    if len(weights) != spec.depth:
        raise ShapeError(f"expected {spec.depth} weight matrices, got {len(weights)}")
    X, single = _batched(x)
    out = _run_layers(spec.layers, weights, X)[:, 0, 0]
    return float(out[0]) if single else out


def feature_scale(spec: NetworkSpec) -> float:
    """sqrt(2^(l-1) / (n_{l-1} d_{l-1})), the normalisation of the feature map."""
    if spec.depth < 2:
        raise ShapeError("feature map needs depth >= 2")
    penult = spec.layers[-2]
    return float(np.sqrt(2.0 ** (spec.depth - 1) / (penult.out_positions * penult.out_channels)))


def feature_map(spec: NetworkSpec, weights, x) -> np.ndarray:
    """All layers but the last, scaled by :func:`feature_scale`."""
    scale = feature_scale(spec)
    X, single = _batched(x)
    out = scale * _run_layers(spec.layers[:-1], weights[:-1], X)
    return out[0] if single else out


@dataclass(frozen=True)
class Network:
    """A sampled network: callable on a cloud or a batch of clouds."""

    spec: NetworkSpec
    weights: list = field(repr=False)

    @classmethod
    def sample(cls, spec: NetworkSpec, rng: np.random.Generator) -> "Network":
        return cls(spec, sample_network(spec, rng))

    def __call__(self, x):
        return network_forward(self.spec, self.weights, x)

    def features(self, x):
        return feature_map(self.spec, self.weights, x)
