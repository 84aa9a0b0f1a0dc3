"""Experiment configuration: presets and a dotted-key text format.

One ``key = <json value>`` assignment per line; ``#`` starts a comment.
Unknown keys are errors so that a typo cannot silently fall back to a default.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from .exceptions import ConfigError
from .randproc import KERNELS, MEANS, ExpTransformed, GpSpec, SensorLayout, uniform_sensors
from .training import LossWeights, TrainConfig

KINDS = ("process", "forward", "inverse", "mixed", "high_dim_case1", "high_dim_case2")

# (dotted key, attribute, value type)
_SCALARS = [
    ("kind", "kind", str),
    ("seeds", "seeds", "ints"),
    ("n_snapshots", "n_snapshots", int),
    ("epochs", "epochs", int),
    ("latent_dim", "latent_dim", int),
    ("sensors.n_k", "n_k", int),
    ("sensors.n_u", "n_u", int),
    ("sensors.n_f", "n_f", int),
    ("sensors.coords_k", "coords_k", "floats?"),
    ("sensors.coords_u", "coords_u", "floats?"),
    ("sensors.coords_f", "coords_f", "floats?"),
    ("sensors.interpolate", "interpolate", bool),
    ("weights.alpha", "alpha", float),
    ("weights.eta", "eta", float),
    ("weights.gamma", "gamma", float),
    ("weights.lam", "lam", float),
    ("weights.n_critic", "n_critic", int),
    ("optim.lr", "lr", float),
    ("optim.beta1", "beta1", float),
    ("optim.beta2", "beta2", float),
    ("optim.eps", "adam_eps", float),
    ("nets.encoder_hidden", "encoder_hidden", "ints"),
    ("nets.generator_hidden", "generator_hidden", "ints"),
    ("nets.discriminator_hidden", "discriminator_hidden", "ints"),
    ("checkpoint.window", "checkpoint_window", int),
    ("checkpoint.stride", "checkpoint_stride", int),
    ("checkpoint.capacity", "checkpoint_capacity", int),
    ("reference.grid_m", "grid_m", int),
    ("reference.n_paths", "n_reference", int),
    ("eval.n_validation", "n_validation", int),
    ("eval.n_noise", "n_noise", int),
    ("out", "out", str),
]
_GP_SECTIONS = {"process": "target", "k": "k_log", "f": "f_proc"}
_GP_FIELDS = [("kernel", str), ("length_scale", float), ("variance_scale", float), ("mean", str), ("mean_value", float)]


def _default_k():
    # log k = sin(1.5 pi (x + 1)) / 5 + GP(0, 4/25 exp(-(x - x')^2))
    return GpSpec("squared_exponential", 1 / math.sqrt(2), 4 / 25, "sine")


def _default_f(a: float = 1 / 5):
    # GP(1/2, 9/400 exp(-(x - x')^2 / a^2)); a = 1/5 is exp(-25 (x - x')^2)
    return GpSpec("squared_exponential", a / math.sqrt(2), 9 / 400, "constant", 0.5)


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str = "forward"
    seeds: tuple = (1, 2, 3)
    n_snapshots: int = 1000
    epochs: int = 10000
    latent_dim: int = 4
    n_k: int = 13
    n_u: int = 2
    n_f: int = 21
    coords_k: tuple = None
    coords_u: tuple = None
    coords_f: tuple = None
    interpolate: bool = True
    alpha: float = 50.0
    eta: float = 0.1
    gamma: float = 1.0
    lam: float = 0.1
    n_critic: int = 5
    lr: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.9
    adam_eps: float = 1e-8
    encoder_hidden: tuple = (128,) * 4
    generator_hidden: tuple = (128,) * 4
    discriminator_hidden: tuple = (128,) * 4
    checkpoint_window: int = 3000
    checkpoint_stride: int = 100
    checkpoint_capacity: int = 30
    grid_m: int = 101
    n_reference: int = 1000
    n_validation: int = 101
    n_noise: int = 1000
    out: str = "runs"
    target: GpSpec = field(default_factory=lambda: GpSpec("squared_exponential", 1.0, 1.0))
    k_log: GpSpec = field(default_factory=_default_k)
    f_proc: GpSpec = field(default_factory=_default_f)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown kind {self.kind!r}; expected one of {KINDS}", field="kind")
        if not self.seeds:
            raise ConfigError("at least one seed is required", field="seeds")
        for key, attr, _ in _SCALARS:
            v = getattr(self, attr)
            if attr in ("n_snapshots", "latent_dim", "grid_m", "n_reference", "n_validation", "n_noise") and v < 1:
                raise ConfigError("must be positive", field=key)
        if self.epochs < 0:
            raise ConfigError("must be nonnegative", field="epochs")
        if self.n_reference < 2:
            raise ConfigError("need at least two reference paths", field="reference.n_paths")
        if self.kind == "process":
            if self.n_k or self.n_u:
                raise ConfigError("process approximation observes f only", field="sensors.n_k")
        elif self.kind == "inverse" and self.n_k != 1:
            raise ConfigError("inverse problem uses exactly one k sensor", field="sensors.n_k")
        elif self.kind in ("forward", "high_dim_case1", "high_dim_case2") and self.n_u != 2:
            raise ConfigError("forward problem observes u on the boundary only (n_u = 2)", field="sensors.n_u")
        if self.n_f < 1:
            raise ConfigError("need at least one f sensor", field="sensors.n_f")
        try:
            LossWeights(self.alpha, self.eta, self.gamma, self.lam, self.n_critic)
        except ConfigError as exc:
            raise ConfigError(str(exc).split(": ", 1)[-1], field="weights." + (exc.field or "")) from None

    # ------------------------------------------------------------ derived

    @property
    def mode(self) -> str:
        """Training mode; high-dimensional cases are forward problems."""
        return "forward" if self.kind.startswith("high_dim") else self.kind

    @property
    def k_process(self) -> ExpTransformed:
        return ExpTransformed(self.k_log)

    def layout(self) -> SensorLayout:
        """Uniform sensors; endpoints of the u sensors form the boundary block."""
        ck = self.coords_k if self.coords_k is not None else (uniform_sensors(self.n_k) if self.n_k else ())
        cu = self.coords_u if self.coords_u is not None else (uniform_sensors(self.n_u) if self.n_u else ())
        cf = self.coords_f if self.coords_f is not None else uniform_sensors(self.n_f)
        if self.kind == "process":
            return SensorLayout(coords_f=cf)
        interior = tuple(x for x in cu if -1.0 < x < 1.0)
        boundary = tuple(x for x in cu if x in (-1.0, 1.0))
        return SensorLayout(coords_k=ck, coords_u=interior, coords_f=cf, coords_b=boundary)

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            latent_dim=self.latent_dim,
            weights=LossWeights(self.alpha, self.eta, self.gamma, self.lam, self.n_critic),
            lr=self.lr,
            beta1=self.beta1,
            beta2=self.beta2,
            adam_eps=self.adam_eps,
            encoder_hidden=tuple(self.encoder_hidden),
            generator_hidden=tuple(self.generator_hidden),
            discriminator_hidden=tuple(self.discriminator_hidden),
            checkpoint_window=self.checkpoint_window,
            checkpoint_stride=self.checkpoint_stride,
            checkpoint_capacity=self.checkpoint_capacity,
            seed=int(seed),
        )

    def desk(self) -> "ExperimentConfig":
        return replace(self, n_snapshots=200, epochs=2000)

    # ------------------------------------------------------------ text form

    def to_flat(self) -> dict:
        out = {key: _encode(getattr(self, attr)) for key, attr, _ in _SCALARS}
        for sec, attr in _GP_SECTIONS.items():
            gp = getattr(self, attr)
            for name, _ in _GP_FIELDS:
                out[f"{sec}.{name}"] = getattr(gp, name)
        return out

    def dumps(self) -> str:
        lines = [f"{k} = {json.dumps(v)}" for k, v in sorted(self.to_flat().items())]
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.dumps().encode("utf-8")).hexdigest()


def _encode(v):
    if isinstance(v, tuple):
        return list(v)
    return v


def _coerce(key, raw, typ):
    if typ is bool:
        if not isinstance(raw, bool):
            raise ConfigError(f"expected true/false, got {raw!r}", field=key)
        return raw
    if typ is int:
        if isinstance(raw, bool) or not isinstance(raw, int):
            raise ConfigError(f"expected an integer, got {raw!r}", field=key)
        return raw
    if typ is float:
        if isinstance(raw, bool) or not isinstance(raw, (int, float)):
            raise ConfigError(f"expected a number, got {raw!r}", field=key)
        return float(raw)
    if typ is str:
        if not isinstance(raw, str):
            raise ConfigError(f"expected a string, got {raw!r}", field=key)
        return raw
    if typ == "floats?" and raw is None:
        return None
    if not isinstance(raw, list):
        raise ConfigError(f"expected a list, got {raw!r}", field=key)
    inner = int if typ == "ints" else float
    return tuple(_coerce(key, x, inner) for x in raw)


_KEYS = {key: (attr, typ) for key, attr, typ in _SCALARS}


def from_flat(flat: dict, base: ExperimentConfig = None) -> ExperimentConfig:
    """Apply dotted-key assignments on top of ``base`` (or a kind preset)."""
    if base is None:
        kind = flat.get("kind", "forward")
        base = preset(kind if isinstance(kind, str) else repr(kind))
    updates = {}
    gp_updates = {attr: {} for attr in _GP_SECTIONS.values()}
    for key, raw in flat.items():
        if key in _KEYS:
            attr, typ = _KEYS[key]
            updates[attr] = _coerce(key, raw, typ)
            continue
        sec, _, name = key.partition(".")
        gp_types = dict(_GP_FIELDS)
        if sec in _GP_SECTIONS and name in gp_types:
            val = _coerce(key, raw, gp_types[name])
            if name == "kernel" and val not in KERNELS or name == "mean" and val not in MEANS:
                raise ConfigError(f"invalid value {val!r}", field=key)
            gp_updates[_GP_SECTIONS[sec]][name] = val
            continue
        raise ConfigError("unknown configuration key", field=key)
    for attr, upd in gp_updates.items():
        if upd:
            try:
                updates[attr] = replace(getattr(base, attr), **upd)
            except ValueError as exc:
                raise ConfigError(str(exc), field=attr) from None
    try:
        return replace(base, **updates)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def parse_text(text: str, base: ExperimentConfig = None) -> ExperimentConfig:
    flat = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip() if not line.lstrip().startswith("#") else ""
        if not body:
            continue
        key, eq, rhs = body.partition("=")
        key = key.strip()
        if not eq or not key:
            raise ConfigError(f"line {lineno}: expected 'key = value'", field=key or None)
        if key in flat:
            raise ConfigError(f"line {lineno}: duplicate key", field=key)
        try:
            flat[key] = json.loads(rhs.strip())
        except json.JSONDecodeError:
            raise ConfigError(f"line {lineno}: value is not valid JSON: {rhs.strip()!r}", field=key) from None
    return from_flat(flat, base)


def load(path, desk: bool = False) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ConfigError(f"config is not UTF-8 text: {exc}") from None
    cfg = parse_text(text)
    return cfg.desk() if desk else cfg


def preset(kind: str) -> ExperimentConfig:
    """Default settings for each experiment kind."""
    if kind == "process":
        return ExperimentConfig(kind="process", n_k=0, n_u=0, n_f=6, discriminator_hidden=(64,) * 4)
    if kind == "forward":
        return ExperimentConfig(kind="forward")
    if kind == "inverse":
        return ExperimentConfig(kind="inverse", n_k=1, n_u=13, n_f=21)
    if kind == "mixed":
        return ExperimentConfig(kind="mixed", n_k=15, n_u=9, n_f=21)
    if kind == "high_dim_case1":
        return ExperimentConfig(kind=kind, n_f=21, latent_dim=10, f_proc=_default_f(0.08))
    if kind == "high_dim_case2":
        return ExperimentConfig(kind=kind, n_f=41, latent_dim=20, f_proc=_default_f(0.02))
    raise ConfigError(f"unknown kind {kind!r}; expected one of {KINDS}", field="kind")


def mixed_case2() -> ExperimentConfig:
    return replace(preset("mixed"), n_k=9, n_u=15)


__all__ = ["ExperimentConfig", "KINDS", "load", "parse_text", "preset", "from_flat", "mixed_case2"]
