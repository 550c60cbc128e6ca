"""Flat ``key = value`` experiment configuration.

Example::

    kind = theorem-trial
    seed = 7
    family = odd
    d = 100
    taus = 6, 8, 10
    layer.1.width = 2
    layer.1.stride = 2
    layer.1.out_channels = 256
    layer.1.activation = tanh
    layer.2.width = full
    layer.2.activation = identity

Blank lines and ``#`` comments are ignored. Lists are comma separated.
Fields not given take the base default, overridden by the per-kind table
``KIND_DEFAULTS``. Architecture keys are ``layer.<k>.<field>`` with k counted
from 1. The default network has two layers: a convolutional hidden layer
(width 2, stride 2 for even n and width 1 otherwise, ``hidden_channels`` channels, tanh for the odd family and
ReLU otherwise) and a fully connected identity layer with one output. Keys
override fields of these defaults; layers beyond the second must be given in
full sequence and start from the plain ``LayerConfig`` defaults.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, fields, replace

from ..convnet import NetworkSpec, ShapeError

KINDS = (
    "haar-test", "kernel-check", "balance", "adv-search", "theorem-trial",
    "isoperimetry", "concentration", "separate", "sudakov", "sphere-tail",
)
FAMILIES = ("odd", "relu")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class LayerConfig:
    width: int | None = None  # None: fully connected over incoming positions
    stride: int = 1
    out_channels: int = 1
    activation: str = "identity"
    init: str = "xavier"


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment run. See ``FIELD_DOCS`` for the meaning of each field."""

    kind: str
    seed: int = 0
    family: str = "relu"
    d: int = 64
    n: int = 4
    dims: tuple[int, ...] = (16, 34, 64)
    taus: tuple[float, ...] = (8.0,)
    networks: int = 200
    trials: int = 100
    samples: int = 10_000
    channels: tuple[int, ...] = (64, 128, 256, 512)
    epsilons: tuple[float, ...] = (0.25, 0.5, 1.0)
    t_values: tuple[float, ...] = (0.0, 8.0, 16.0, 24.0, 32.0)
    m_values: tuple[int, ...] = (16, 64)
    samples_measure: int = 4000
    samples_blowup: int = 2000
    k_probe: int = 128
    max_candidates: int = 64
    n_angles: int = 32
    chain_steps: int = 300
    hidden_channels: int = 256
    out_dir: str = "runs"
    workers: int = 1
    layers: tuple[LayerConfig, ...] = ()

    def network_spec(self) -> NetworkSpec:
        return NetworkSpec.build(self.d, self.n, [
            dict(width=l.width, stride=l.stride, out_channels=l.out_channels,
                 activation=l.activation, init=l.init)
            for l in self.layers
        ])


FIELD_DOCS = {
    "kind": "experiment to run; one of " + ", ".join(KINDS),
    "seed": "master seed (64-bit); ORBITADV_SEED or --seed override it",
    "family": "network family for search/balance runs: odd (tanh) or relu",
    "d": "vector dimension",
    "n": "number of vectors per input cloud",
    "dims": "dimensions swept by the concentration experiment",
    "taus": "confidence parameters tau for the adversarial budget",
    "networks": "independent networks per search/balance experiment",
    "trials": "independent trials (kernel-check, separate, sudakov/sphere-tail repeats)",
    "samples": "Monte Carlo samples per estimate",
    "channels": "hidden channel counts swept by kernel-check",
    "epsilons": "concentration: absolute eps; isoperimetry: eps / ||x0||_sp",
    "t_values": "inner-product thresholds for sphere-tail",
    "m_values": "point counts for the sudakov check",
    "samples_measure": "isoperimetry: orbit samples estimating mu(A)",
    "samples_blowup": "isoperimetry: orbit samples estimating mu(A_eps)",
    "k_probe": "isoperimetry: plane-rotation probes per point",
    "max_candidates": "search: random planes (and Haar fallbacks) per network",
    "n_angles": "search: angles per ladder",
    "chain_steps": "search: steps of the chained plane walk",
    "hidden_channels": "channels of the default hidden layer",
    "out_dir": "directory for CSV and JSON outputs",
    "workers": "worker processes; results do not depend on it",
    "layers": "architecture, keys layer.<k>.{width,stride,out_channels,activation,init}",
}

KIND_DEFAULTS: dict[str, dict] = {
    "haar-test": dict(d=8, samples=100_000),
    "kernel-check": dict(d=64, n=4, trials=100),
    "balance": dict(family="relu", d=128, n=4, networks=200, samples=10_000),
    "adv-search": dict(family="odd", d=100, n=4, taus=(8.0,), networks=200),
    "theorem-trial": dict(family="odd", d=100, n=4, taus=(8.0,), networks=200),
    "isoperimetry": dict(d=34, n=1, epsilons=(0.5, 0.7071067811865476, 1.0)),
    "concentration": dict(dims=(16, 34, 64), samples=100_000),
    "separate": dict(family="relu", d=128, n=4, trials=200),
    "sudakov": dict(samples=100_000, m_values=(16, 64)),
    "sphere-tail": dict(d=64, samples=200_000),
}

_LAYER_FIELDS = {f.name: f.type for f in fields(LayerConfig)}
_SCALAR = {"seed": int, "d": int, "n": int, "networks": int, "trials": int, "samples": int,
           "samples_measure": int, "samples_blowup": int, "k_probe": int, "max_candidates": int,
           "n_angles": int, "chain_steps": int, "hidden_channels": int, "workers": int,
           "kind": str, "family": str, "out_dir": str}
_LISTS = {"dims": int, "taus": float, "channels": int, "epsilons": float,
          "t_values": float, "m_values": int}


def default_layers(family: str, hidden_channels: int, n: int) -> tuple[LayerConfig, ...]:
    act = "tanh" if family == "odd" else "relu"
    # width 2 / stride 2 needs an even n; otherwise fall back to pointwise
    w = 2 if n >= 2 and n % 2 == 0 else 1
    return (
        LayerConfig(width=w, stride=w, out_channels=hidden_channels, activation=act),
        LayerConfig(width=None, stride=1, out_channels=1, activation="identity"),
    )


def _convert(kind, raw: str, where: str):
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
    except ValueError:
        raise ConfigError(f"{where}: malformed number {raw!r}") from None
    return raw


def parse_config(text: str) -> ExperimentConfig:
    """Strict parse: unknown keys, duplicates and bad values raise ConfigError."""
    values: dict[str, object] = {}
    layer_vals: dict[int, dict[str, object]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"line {lineno}"
        if "=" not in line:
            raise ConfigError(f"{where}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key.startswith("layer."):
            parts = key.split(".")
            if len(parts) != 3 or not parts[1].isdigit() or int(parts[1]) < 1:
                raise ConfigError(f"{where}: malformed layer key {key!r}")
            idx, name = int(parts[1]), parts[2]
            if name not in _LAYER_FIELDS:
                raise ConfigError(f"{where}: unknown layer field {name!r}")
            slot = layer_vals.setdefault(idx, {})
            if name in slot:
                raise ConfigError(f"{where}: duplicate key {key!r}")
            if name == "width":
                slot[name] = None if raw == "full" else _convert(int, raw, f"{where} ({key})")
            elif name in ("stride", "out_channels"):
                slot[name] = _convert(int, raw, f"{where} ({key})")
            else:
                slot[name] = raw
            continue
        if key in values:
            raise ConfigError(f"{where}: duplicate key {key!r}")
        if key in _SCALAR:
            values[key] = _convert(_SCALAR[key], raw, f"{where} ({key})")
        elif key in _LISTS:
            items = [s.strip() for s in raw.split(",") if s.strip()]
            if not items:
                raise ConfigError(f"{where} ({key}): empty list")
            values[key] = tuple(_convert(_LISTS[key], s, f"{where} ({key})") for s in items)
        else:
            raise ConfigError(f"{where}: unknown key {key!r}")

    if "kind" not in values:
        raise ConfigError("missing required key 'kind'")
    kind = values["kind"]
    if kind not in KINDS:
        raise ConfigError(f"kind: unknown experiment kind {kind!r}; expected one of {', '.join(KINDS)}")
    merged = dict(KIND_DEFAULTS[kind])
    merged.update(values)
    cfg = ExperimentConfig(**merged)

    if layer_vals:
        base = default_layers(cfg.family, cfg.hidden_channels, cfg.n)
        count = max(max(layer_vals), len(base))
        missing = [k for k in range(len(base) + 1, count + 1) if k not in layer_vals]
        if missing:
            raise ConfigError(f"layers: missing definitions for layer(s) {missing}")
        layers = []
        for k in range(1, count + 1):
            proto = base[k - 1] if k <= len(base) else LayerConfig()
            layers.append(replace(proto, **layer_vals.get(k, {})))
        cfg = replace(cfg, layers=tuple(layers))
    else:
        cfg = replace(cfg, layers=default_layers(cfg.family, cfg.hidden_channels, cfg.n))
    validate(cfg)
    return cfg


# which network family a kind's architecture must satisfy
_FAMILY_OF = {
    "balance": lambda c: c.family,
    "adv-search": lambda c: c.family,
    "theorem-trial": lambda c: c.family,
    "kernel-check": lambda c: "relu",
    "separate": lambda c: "relu",
}


def validate(cfg: ExperimentConfig):
    if cfg.family not in FAMILIES:
        raise ConfigError(f"family: expected one of {FAMILIES}, got {cfg.family!r}")
    if not 0 <= cfg.seed < 2**64:
        raise ConfigError("seed: must be a 64-bit unsigned integer")
    for name in ("d", "n", "networks", "trials", "samples", "samples_measure", "samples_blowup",
                 "k_probe", "max_candidates", "n_angles", "hidden_channels", "workers"):
        if getattr(cfg, name) < 1:
            raise ConfigError(f"{name}: must be >= 1")
    if cfg.chain_steps < 0:
        raise ConfigError("chain_steps: must be >= 0")
    for name in _LISTS:
        vals = getattr(cfg, name)
        if not vals:
            raise ConfigError(f"{name}: empty list")
        if any(not math.isfinite(v) for v in vals):
            raise ConfigError(f"{name}: values must be finite")
    if any(t <= 0 for t in cfg.taus):
        raise ConfigError("taus: must be positive")
    if any(e <= 0 for e in cfg.epsilons):
        raise ConfigError("epsilons: must be positive")
    if any(v < 1 for v in cfg.channels + cfg.m_values + cfg.dims):
        raise ConfigError("channels, m_values and dims must be >= 1")
    if not cfg.out_dir or cfg.out_dir != cfg.out_dir.strip() or any(c in cfg.out_dir for c in "#\n"):
        raise ConfigError("out_dir: must be nonempty, without '#', newlines or surrounding spaces")
    try:
        spec = cfg.network_spec()
    except ShapeError as exc:
        raise ConfigError(f"layers: {exc}") from None
    family = _FAMILY_OF.get(cfg.kind, lambda c: None)(cfg)
    if family is not None:
        from ..advsearch import check_kind  # deferred: advsearch imports this package

        try:
            check_kind(family, spec)
        except ValueError as exc:
            raise ConfigError(f"family/layers: {exc}") from None
    if cfg.kind == "isoperimetry" and cfg.n != 1:
        raise ConfigError("n: isoperimetry runs on single-column clouds (n = 1)")
    if cfg.kind == "concentration" and min(cfg.dims) < 3:
        raise ConfigError("dims: concentration needs d >= 3")
    if cfg.kind in ("adv-search", "theorem-trial") and cfg.d < 3:
        raise ConfigError("d: the adversarial budget needs d >= 3")


def serialize(cfg: ExperimentConfig) -> str:
    """Canonical text form; ``parse_config(serialize(c)) == c``."""
    lines = []
    for f in fields(cfg):
        if f.name == "layers":
            continue
        val = getattr(cfg, f.name)
        if isinstance(val, tuple):
            val = ", ".join(repr(v) for v in val)
        lines.append(f"{f.name} = {val}")
    for k, layer in enumerate(cfg.layers, start=1):
        for f in fields(layer):
            val = getattr(layer, f.name)
            if f.name == "width" and val is None:
                val = "full"
            lines.append(f"layer.{k}.{f.name} = {val}")
    return "\n".join(lines) + "\n"


def config_hash(cfg: ExperimentConfig) -> str:
    """Hash of everything that affects results (not out_dir or workers)."""
    text = serialize(replace(cfg, out_dir="", workers=1))
    return hashlib.sha256(text.encode()).hexdigest()[:16]
