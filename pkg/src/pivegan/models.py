"""Encoder, generators, physics operators and critic wired into one model."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .autodiff import MlpNet, forward, forward_jet, init_params
from .autodiff import tape as ad
from .autodiff.nn import Jet2
from .exceptions import NotBoundaryPoint, ShapeMismatch
from .randproc import BLOCKS, SensorLayout
from .refsolver import DIFFUSION_SCALE


@dataclass
class EncoderOut:
    mu: object
    log_sigma: object

    @property
    def sigma(self):
        return ad.exp(self.log_sigma)


@dataclass
class LatentCode:
    z: object
    provenance: str = "reparameterized"


@dataclass
class FakeSnapshot:
    """Generated blocks, each ``(N, n_block)``; ``vector`` is K|U|F|B."""

    K: object
    U: object
    F: object
    B: object

    @property
    def vector(self):
        parts = [getattr(self, b) for b in BLOCKS if np.shape(ad.value(getattr(self, b)))[-1] > 0]
        return ad.concat(parts, axis=-1) if len(parts) > 1 else parts[0]


@dataclass
class ModelBundle:
    """Networks of one model.

    ``mode`` is ``"process"`` (a single generator ``gen_f`` models the process
    directly) or ``"sde"`` (generators ``gen_k`` and ``gen_u``; f and b follow
    from the differential and boundary operators).
    """

    encoder: MlpNet
    discriminator: MlpNet
    generators: dict
    latent_dim: int
    layout: SensorLayout
    mode: str = "sde"

    def __post_init__(self):
        n_total, d = self.layout.n_total, self.latent_dim
        if self.encoder.widths[0] != n_total or self.encoder.widths[-1] != 2 * d:
            raise ShapeMismatch("encoder widths do not match layout and latent dimension")
        if self.discriminator.widths[0] != n_total or self.discriminator.widths[-1] != 1:
            raise ShapeMismatch("discriminator widths do not match layout")
        want = ("f",) if self.mode == "process" else ("k", "u")
        if tuple(sorted(self.generators)) != tuple(sorted(want)):
            raise ShapeMismatch(f"{self.mode} mode needs generators {want}")
        for g in self.generators.values():
            if g.widths[0] != 1 + d or g.widths[-1] != 1:
                raise ShapeMismatch(f"generator {g.name} must map 1+d inputs to one output")

    @property
    def gen_k(self) -> Optional[MlpNet]:
        return self.generators.get("k")

    @property
    def gen_u(self) -> Optional[MlpNet]:
        return self.generators.get("u")

    @property
    def gen_f(self) -> Optional[MlpNet]:
        return self.generators.get("f")

    def nets(self) -> dict:
        out = {"encoder": self.encoder, "discriminator": self.discriminator}
        out.update({f"gen_{k}": g for k, g in sorted(self.generators.items())})
        return out

    def generator_params(self) -> list:
        return [p for _, g in sorted(self.generators.items()) for p in g.params()]

    def generator_grads(self, grad_map) -> list:
        return [p for _, g in sorted(self.generators.items()) for p in g.grads_from(grad_map)]


def build_bundle(
    layout: SensorLayout,
    rng: np.random.Generator,
    latent_dim: int = 4,
    mode: str = "sde",
    encoder_hidden=(128,) * 4,
    generator_hidden=(128,) * 4,
    discriminator_hidden=(128,) * 4,
) -> ModelBundle:
    n, d = layout.n_total, latent_dim
    encoder = init_params((n, *encoder_hidden, 2 * d), rng, name="encoder")
    names = ("f",) if mode == "process" else ("k", "u")
    gens = {k: init_params((1 + d, *generator_hidden, 1), rng, name=f"gen_{k}") for k in names}
    disc = init_params((n, *discriminator_hidden, 1), rng, name="discriminator")
    return ModelBundle(encoder, disc, gens, d, layout, mode)


def encode(bundle: ModelBundle, rows, tape=None) -> EncoderOut:
    """Split the encoder output into ``mu`` and ``log_sigma`` (each ``(N, d)``)."""
    out = forward(bundle.encoder, rows, tape)
    d = bundle.latent_dim
    return EncoderOut(ad.getitem(out, (Ellipsis, slice(0, d))), ad.getitem(out, (Ellipsis, slice(d, 2 * d))))


def reparameterize(enc: EncoderOut, xi) -> LatentCode:
    xi = np.asarray(xi, dtype=np.float64)
    if xi.shape != np.shape(ad.value(enc.mu)):
        raise ShapeMismatch(f"noise shape {xi.shape} != latent shape {np.shape(ad.value(enc.mu))}")
    return LatentCode(ad.add(enc.mu, ad.mul(enc.sigma, xi)))


def _latent(z):
    return z.z if isinstance(z, LatentCode) else z


def generator_inputs(coords, z):
    """Inputs of shape ``(N, P, 1 + d)``: coordinate ``coords[p]`` with code ``z[j]``."""
    z = _latent(z)
    zv = ad.value(z)
    if np.ndim(zv) == 1:
        z = ad.reshape(z, (1, -1))
        zv = ad.value(z)
    n, d = zv.shape
    c = np.asarray(coords, dtype=np.float64).reshape(-1)
    xcol = np.broadcast_to(c[None, :, None], (n, c.size, 1))
    zb = ad.mul(ad.reshape(z, (n, 1, d)), np.ones((1, c.size, 1)))
    return ad.concat([xcol, zb], axis=-1)


def gen_eval(net: MlpNet, x, z, tape=None, order: int = 2) -> Jet2:
    """Jet of the generated field at coordinates ``x`` for every code row of ``z``.

    Outputs have shape ``(N, P)``; scalars ``x`` give ``P = 1``.
    """
    jet = forward_jet(net, generator_inputs(np.atleast_1d(x), z), tape, order)
    return Jet2(*(None if c is None else ad.reshape(c, np.shape(ad.value(c))[:-1]) for c in jet))


def gen_values(net: MlpNet, coords, z, tape=None):
    out = forward(net, generator_inputs(coords, z), tape)
    return ad.reshape(out, np.shape(ad.value(out))[:-1])


def physics_residual(k_jet: Jet2, u_jet: Jet2):
    """``-(1/10) (k' u' + k u'')``, the divergence-form operator applied to jets."""
    flux = ad.add(ad.mul(k_jet.dx, u_jet.dx), ad.mul(k_jet.v, u_jet.dxx))
    return ad.mul(-DIFFUSION_SCALE, flux)


def boundary_value(u_jet: Jet2, x, lo: float = -1.0, hi: float = 1.0):
    """Dirichlet trace operator: the generated value itself at a boundary point."""
    for xv in np.atleast_1d(x):
        if xv not in (lo, hi):
            raise NotBoundaryPoint(f"{xv} is not a boundary point of [{lo}, {hi}]")
    return u_jet.v


def assemble_fake(bundle: ModelBundle, z, tape=None, layout: SensorLayout = None) -> FakeSnapshot:
    """Generated snapshot blocks for every code row of ``z``.

    ``tape`` records the generator parameters; the pass is also recorded when
    ``z`` is taped (gradients then reach the encoder through the code).
    """
    layout = layout or bundle.layout
    z = _latent(z)
    n = np.shape(ad.value(z))[0]
    empty = np.zeros((n, 0))
    if bundle.mode == "process":
        F = gen_values(bundle.gen_f, layout.coords_f, z, tape) if layout.coords_f else empty
        return FakeSnapshot(empty, empty, F, empty)
    K = gen_values(bundle.gen_k, layout.coords_k, z, tape) if layout.coords_k else empty
    U = gen_values(bundle.gen_u, layout.coords_u, z, tape) if layout.coords_u else empty
    if layout.coords_f:
        k_jet = gen_eval(bundle.gen_k, layout.coords_f, z, tape, order=1)
        u_jet = gen_eval(bundle.gen_u, layout.coords_f, z, tape)
        F = physics_residual(k_jet, u_jet)
    else:
        F = empty
    if layout.coords_b:
        values = gen_values(bundle.gen_u, layout.coords_b, z, tape)
        B = boundary_value(Jet2(values, None, None), layout.coords_b, layout.lo, layout.hi)
    else:
        B = empty
    return FakeSnapshot(K, U, F, B)


def discriminate(bundle: ModelBundle, vectors, tape=None):
    """Unbounded critic value per row (shape ``(N,)``)."""
    out = forward(bundle.discriminator, vectors, tape)
    return ad.reshape(out, np.shape(ad.value(out))[:-1])
