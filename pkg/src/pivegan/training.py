"""Loss functions and the alternating encoder / generator / critic optimisation."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, asdict
from typing import Callable, Optional

import numpy as np

from . import rng as rngmod
from .autodiff import AdamState, Tape, adam_step, forward, input_gradient
from .autodiff import tape as ad
from .exceptions import ConfigError, LayoutModeMismatch, NonFiniteLoss, ShapeMismatch
from .models import (
    ModelBundle,
    assemble_fake,
    build_bundle,
    discriminate,
    encode,
    reparameterize,
)
from .randproc import SensorLayout, SnapshotSet

MODES = ("process", "forward", "inverse", "mixed")
LOSS_COLUMNS = ("epoch", "loss_E", "loss_G", "loss_D", "kl", "recon", "pen", "lr")


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 50.0
    eta: float = 0.1
    gamma: float = 1.0
    lam: float = 0.1
    n_critic: int = 5

    def __post_init__(self):
        for name in ("alpha", "eta", "gamma", "lam"):
            if not getattr(self, name) > 0:
                raise ConfigError("must be positive", field=name)
        if int(self.n_critic) < 1:
            raise ConfigError("must be a positive integer", field="n_critic")


@dataclass
class TrainConfig:
    epochs: int = 2000
    latent_dim: int = 4
    weights: LossWeights = field(default_factory=LossWeights)
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
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("must be nonnegative", field="epochs")
        if self.latent_dim < 1:
            raise ConfigError("must be positive", field="latent_dim")
        if not self.lr > 0:
            raise ConfigError("must be positive", field="lr")
        if self.checkpoint_stride < 1 or self.checkpoint_capacity < 1:
            raise ConfigError("checkpoint stride and capacity must be positive")


@dataclass
class LossReport:
    epoch: int
    loss_E: float
    loss_G: float
    loss_D: float
    kl: float
    recon: float
    pen: float
    lr: float


@dataclass
class TrainState:
    bundle: ModelBundle
    adam: dict
    config: TrainConfig
    epoch: int = 0
    ring: list = field(default_factory=list)
    counters: dict = field(default_factory=lambda: {"disc": 0, "enc": 0, "gen": 0})
    rngs: dict = field(default_factory=dict)

    @property
    def weights(self) -> LossWeights:
        return self.config.weights


# ---------------------------------------------------------------- losses


def kl_gaussian(mu, log_sigma):
    """KL(N(mu, diag sigma^2) || N(0, I)), summed over the last axis."""
    if np.shape(ad.value(mu)) != np.shape(ad.value(log_sigma)):
        raise ShapeMismatch("mu and log_sigma differ in shape")
    terms = ad.sub(
        ad.add(ad.square(mu), ad.exp(ad.mul(2.0, log_sigma))),
        ad.add(1.0, ad.mul(2.0, log_sigma)),
    )
    return ad.mul(0.5, ad.sum(terms, axis=-1))


def reconstruction(fake, real):
    """Row-wise mean squared difference over snapshot coordinates."""
    real = np.asarray(real, dtype=np.float64)
    if np.shape(ad.value(fake)) != real.shape:
        raise ShapeMismatch(f"fake shape {np.shape(ad.value(fake))} != real shape {real.shape}")
    return ad.mean(ad.square(ad.sub(fake, real)), axis=-1)


def encoder_loss(real, fake, enc):
    """Batch mean of KL(row) + reconstruction(row); returns (loss, kl, recon)."""
    kl = ad.mean(kl_gaussian(enc.mu, enc.log_sigma))
    rec = ad.mean(reconstruction(fake, real))
    return ad.add(kl, rec), kl, rec


def generator_loss(fake, real, critic_fake, alpha: float, eta: float):
    rec = reconstruction(fake, real)
    if np.shape(ad.value(critic_fake)) != np.shape(ad.value(rec)):
        raise ShapeMismatch("critic values do not match the batch")
    return ad.mean(ad.add(ad.mul(-alpha, critic_fake), ad.mul(eta, rec)))


def gradient_penalty(critic, fake, real, eps, tape=None):
    """Row-wise (||grad D(mix)|| - 1)^2 at mix = (1 - eps) fake + eps real."""
    fake_v = np.shape(ad.value(fake))
    real = np.asarray(real, dtype=np.float64)
    if fake_v != real.shape:
        raise ShapeMismatch("fake and real snapshots differ in shape")
    eps = np.asarray(eps, dtype=np.float64)
    if np.any(eps < 0) or np.any(eps > 1):
        raise ValueError("mixing weights must lie in [0, 1]")
    eps = eps.reshape(eps.shape + (1,) * (real.ndim - eps.ndim))
    mix = ad.add(ad.mul(1.0 - eps, fake), eps * real)
    grad = input_gradient(critic, mix, tape)
    return ad.square(ad.sub(ad.norm(grad, axis=-1), 1.0))


def _critic(net, vectors, tape):
    out = forward(net, vectors, tape)
    return ad.reshape(out, np.shape(ad.value(out))[:-1])


def discriminator_loss(critic, real, fake, eps, gamma: float, lam: float, tape=None):
    """Batch mean of gamma (D(fake) - D(real)) + lam * penalty; returns (loss, pen)."""
    real = np.asarray(real, dtype=np.float64)
    if np.shape(ad.value(fake)) != real.shape:
        raise ShapeMismatch("fake and real snapshots differ in shape")
    gap = ad.sub(_critic(critic, fake, tape), _critic(critic, real, tape))
    pen = gradient_penalty(critic, fake, real, eps, tape)
    loss = ad.mean(ad.add(ad.mul(gamma, gap), ad.mul(lam, pen)))
    return loss, ad.mean(pen)


# ---------------------------------------------------------------- training


def validate_layout(layout: SensorLayout, mode: str) -> None:
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}", field="mode")
    c = layout.counts
    if mode == "process":
        if c["K"] or c["U"] or c["B"] or not c["F"]:
            raise LayoutModeMismatch("process approximation uses F sensors only")
        return
    if not c["F"]:
        raise LayoutModeMismatch(f"{mode} problem needs f sensors")
    if mode == "forward" and (c["U"] or not c["K"]):
        raise LayoutModeMismatch("forward problem: k sensors required, no interior u sensors")
    if mode == "inverse" and (c["K"] != 1 or not (c["U"] + c["B"])):
        raise LayoutModeMismatch("inverse problem: exactly one k sensor and some u sensors")
    if mode == "mixed" and (c["K"] < 2 or not c["U"]):
        raise LayoutModeMismatch("mixed problem: partial k (>= 2) and interior u sensors")


def init_state(config: TrainConfig, layout: SensorLayout, mode: str) -> TrainState:
    bundle = build_bundle(
        layout,
        rngmod.stream(config.seed, "init"),
        latent_dim=config.latent_dim,
        mode="process" if mode == "process" else "sde",
        encoder_hidden=config.encoder_hidden,
        generator_hidden=config.generator_hidden,
        discriminator_hidden=config.discriminator_hidden,
    )
    kw = dict(
        lr0=config.lr,
        horizon=max(config.epochs, 1),
        beta1=config.beta1,
        beta2=config.beta2,
        eps=config.adam_eps,
    )
    adam = {
        "encoder": AdamState.for_params(bundle.encoder.params(), **kw),
        "generator": AdamState.for_params(bundle.generator_params(), **kw),
        "discriminator": AdamState.for_params(bundle.discriminator.params(), **kw),
    }
    rngs = {name: rngmod.stream(config.seed, name) for name in ("xi", "eps", "shuffle")}
    return TrainState(bundle, adam, config, rngs=rngs)


def checkpoint_tick(state: TrainState, epoch: Optional[int] = None) -> bool:
    """Capture generator copies on the late-training stride; returns True on capture.

    ``epoch`` is the 0-based index of the epoch just completed.
    """
    cfg = state.config
    e = state.epoch - 1 if epoch is None else epoch
    horizon = cfg.epochs
    start = max(0, horizon - cfg.checkpoint_window)
    if e < start or e >= horizon or (horizon - e) % cfg.checkpoint_stride:
        return False
    snap = {k: g.copy() for k, g in state.bundle.generators.items()}
    state.ring.append((e, snap))
    if len(state.ring) > cfg.checkpoint_capacity:
        state.ring.pop(0)
    return True


def _finite(x, what, epoch):
    v = float(ad.value(x))
    if not math.isfinite(v):
        raise NonFiniteLoss(f"{what} is not finite", epoch=epoch)
    return v


def train_epoch(state: TrainState, real: np.ndarray) -> LossReport:
    """One outer iteration: n_critic critic steps, then encoder and generator steps."""
    b = state.bundle
    w = state.weights
    n = real.shape[0]
    d = b.latent_dim
    e = state.epoch
    for opt in state.adam.values():
        opt.schedule(e)
    xi_rng, eps_rng = state.rngs["xi"], state.rngs["eps"]

    for _ in range(int(w.n_critic)):
        xi = xi_rng.standard_normal((n, d))
        eps = eps_rng.uniform(size=n)
        z = reparameterize(encode(b, real), xi)
        fake = assemble_fake(b, z).vector
        tape = Tape()
        loss_d, pen = discriminator_loss(b.discriminator, real, fake, eps, w.gamma, w.lam, tape)
        loss_d_v = _finite(loss_d, "critic loss", e)
        grads = tape.backward(loss_d)
        adam_step(b.discriminator.params(), b.discriminator.grads_from(grads), state.adam["discriminator"])
        state.counters["disc"] += 1

    xi = xi_rng.standard_normal((n, d))
    tape = Tape()
    enc = encode(b, real, tape)
    fake = assemble_fake(b, reparameterize(enc, xi)).vector
    loss_e, kl, rec = encoder_loss(real, fake, enc)
    loss_e_v = _finite(loss_e, "encoder loss", e)
    grads = tape.backward(loss_e)
    adam_step(b.encoder.params(), b.encoder.grads_from(grads), state.adam["encoder"])
    state.counters["enc"] += 1

    # the code is recomputed with the updated encoder and held constant
    z = reparameterize(encode(b, real), xi)
    tape = Tape()
    fake = assemble_fake(b, z, tape).vector
    critic = discriminate(b, fake)
    loss_g = generator_loss(fake, real, critic, w.alpha, w.eta)
    loss_g_v = _finite(loss_g, "generator loss", e)
    grads = tape.backward(loss_g)
    adam_step(b.generator_params(), b.generator_grads(grads), state.adam["generator"])
    state.counters["gen"] += 1

    report = LossReport(
        epoch=e,
        loss_E=loss_e_v,
        loss_G=loss_g_v,
        loss_D=loss_d_v,
        kl=float(ad.value(kl)),
        recon=float(ad.value(rec)),
        pen=float(ad.value(pen)),
        lr=state.adam["generator"].lr,
    )
    state.epoch += 1
    checkpoint_tick(state)
    return report


def _train(config, snapshots: SnapshotSet, mode: str, callback=None):
    validate_layout(snapshots.layout, mode)
    state = init_state(config, snapshots.layout, mode)
    real = snapshots.matrix()
    if real.shape[0] == 0:
        raise ConfigError("snapshot set is empty", field="snapshots")
    reports = []
    while state.epoch < config.epochs:
        reports.append(train_epoch(state, real))
        if callback is not None:
            callback(state, reports[-1])
    return state, reports


def train_process(
    config: TrainConfig, snapshots: SnapshotSet, callback: Optional[Callable] = None
):
    """Approximate a stochastic process observed only through F snapshots.

    ``callback(state, report)`` runs after every epoch.
    """
    return _train(config, snapshots, "process", callback)


def train_sde(
    config: TrainConfig,
    snapshots: SnapshotSet,
    mode: str,
    callback: Optional[Callable] = None,
):
    """Forward, inverse or mixed problem with physics-composed fakes."""
    if mode not in ("forward", "inverse", "mixed"):
        raise ConfigError(f"unknown SDE mode {mode!r}", field="mode")
    return _train(config, snapshots, mode, callback)


def write_loss_csv(reports, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(LOSS_COLUMNS)
        for r in reports:
            row = asdict(r)
            writer.writerow([row["epoch"]] + ["%.17g" % row[c] for c in LOSS_COLUMNS[1:]])


def initial_loss_terms(config: TrainConfig, snapshots: SnapshotSet, mode: str) -> dict:
    """Weighted objective magnitudes at initialisation (no parameter updates)."""
    validate_layout(snapshots.layout, mode)
    state = init_state(config, snapshots.layout, mode)
    b, w = state.bundle, state.weights
    real = snapshots.matrix()
    n, d = real.shape[0], b.latent_dim
    xi = state.rngs["xi"].standard_normal((n, d))
    eps = state.rngs["eps"].uniform(size=n)
    enc = encode(b, real)
    fake = assemble_fake(b, reparameterize(enc, xi)).vector
    loss_e, kl, rec = encoder_loss(real, fake, enc)
    critic = discriminate(b, fake)
    loss_g = generator_loss(fake, real, critic, w.alpha, w.eta)
    loss_d, pen = discriminator_loss(b.discriminator, real, fake, eps, w.gamma, w.lam)
    gap = float(np.mean(discriminate(b, fake) - discriminate(b, real)))
    return {
        "encoder": float(loss_e),
        "generator": float(loss_g),
        "discriminator": float(loss_d),
        "kl": float(kl),
        "recon": float(rec),
        "alpha_critic": float(-w.alpha * np.mean(critic)),
        "eta_recon": float(w.eta * rec),
        "gamma_gap": w.gamma * gap,
        "lam_pen": float(w.lam * pen),
    }
