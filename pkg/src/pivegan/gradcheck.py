"""Finite-difference verification of every differentiated quantity.

Reverse-mode parameter gradients, spatial jets and critic input gradients are
compared against fourth-order central differences.  The difference quotients
are evaluated in extended precision (``np.longdouble``) so that the oracle's
roundoff stays far below the 1e-6 tolerance even for small coordinates.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import models
from .autodiff import MlpNet, Tape, forward, forward_jet, init_params, input_gradient
from .autodiff import tape as ad
from .randproc import SensorLayout
from . import training

REL_TOL = 1e-6
ABS_GUARD = 1e-8
_XP = np.longdouble


@dataclass
class CheckResult:
    name: str
    family: str
    max_rel_err: float
    n_coords: int
    passed: bool


@dataclass
class GradcheckReport:
    results: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.results) and all(r.passed for r in self.results)

    def by_family(self) -> dict:
        out = {}
        for r in self.results:
            out[r.family] = max(out.get(r.family, 0.0), r.max_rel_err)
        return out

    def failures(self) -> list:
        return [r for r in self.results if not r.passed]

    def lines(self) -> list[str]:
        out = [f"{'PASS' if r.passed else 'FAIL'} {r.family:<20} {r.name:<34} max_rel_err={r.max_rel_err:.3e}" for r in self.results]
        out += [f"family {fam}: max_rel_err={err:.3e}" for fam, err in sorted(self.by_family().items())]
        return out


def compare(analytic, numeric, rel_tol=REL_TOL, guard=ABS_GUARD) -> tuple[float, bool]:
    """Worst per-coordinate error: relative above ``guard``, absolute below it."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    scale = np.maximum(np.abs(a), np.abs(n))
    small = scale < guard
    err = np.where(small, np.abs(a - n), np.abs(a - n) / np.where(small, 1.0, scale))
    worst = float(err.max()) if err.size else 0.0
    ok = bool(np.all(np.where(small, np.abs(a - n) <= guard, err <= rel_tol)))
    return worst, ok


def fd_derivative(fn: Callable, x0: float, h: float = 1e-3, order: int = 1):
    """Fourth-order central difference of a scalar or array function at ``x0``."""
    x0 = _XP(x0)
    h = _XP(h)
    f = {k: np.asarray(fn(x0 + k * h), dtype=_XP) for k in (-2, -1, 0, 1, 2)}
    if order == 1:
        return (f[-2] - 8 * f[-1] + 8 * f[1] - f[2]) / (12 * h)
    return (-f[-2] + 16 * f[-1] - 30 * f[0] + 16 * f[1] - f[2]) / (12 * h * h)


def fd_param_grad(loss: Callable, nets: list, h: float = 1e-4) -> dict:
    """Central-difference gradient of ``loss()`` with respect to every parameter.

    Parameters are temporarily replaced by extended-precision copies, so the
    loss must be written with dtype-preserving operations.
    """
    grads = {}
    for net in nets:
        saved = [p for p in net.params()]
        xp = [p.astype(_XP) for p in saved]
        _set(net, xp)
        try:
            for key, p in zip(net.param_keys(), xp):
                g = np.zeros(p.shape, dtype=_XP)
                for idx in np.ndindex(p.shape):
                    orig = p[idx]
                    vals = []
                    for k in (-2, -1, 1, 2):
                        p[idx] = orig + k * _XP(h)
                        vals.append(_XP(loss()))
                    p[idx] = orig
                    g[idx] = (vals[0] - 8 * vals[1] + 8 * vals[2] - vals[3]) / (12 * _XP(h))
                grads[key] = g
        finally:
            _set(net, saved)
    return grads


def _set(net: MlpNet, arrays):
    net.weights = list(arrays[0::2])
    net.biases = list(arrays[1::2])


def _tape_grads(build: Callable, nets: list) -> dict:
    tape = Tape()
    out = build(tape)
    return tape.backward(out)


def _param_check(name, family, build, nets) -> CheckResult:
    """``build(tape)`` returns the scalar loss; untaped when ``tape`` is None."""
    grads = _tape_grads(build, nets)
    numeric = fd_param_grad(lambda: ad.value(build(None)), nets)
    an = np.concatenate([np.ravel(grads[k]) for net in nets for k in net.param_keys()])
    nu = np.concatenate([np.ravel(numeric[k]) for net in nets for k in net.param_keys()])
    err, ok = compare(an, nu)
    return CheckResult(name, family, err, an.size, ok)


# ---------------------------------------------------------------- checks


def _random_widths(rng, n_in, n_out):
    depth = int(rng.integers(1, 3))
    return (n_in, *(int(rng.integers(3, 9)) for _ in range(depth)), n_out)


def _perturb_biases(net: MlpNet, rng):
    for b in net.biases:
        b[...] = rng.uniform(-0.5, 0.5, b.shape)
    return net


def check_jets(rng, idx: int) -> list[CheckResult]:
    """Spatial jets against differences of the plain forward pass."""
    d = int(rng.integers(1, 3))
    net = _perturb_biases(init_params(_random_widths(rng, 1 + d, 1), rng, name=f"g{idx}"), rng)
    x = float(rng.uniform(-0.9, 0.9))
    z = rng.standard_normal(d)

    def f(xv):
        inp = np.concatenate([np.asarray([xv], dtype=_XP), z.astype(_XP)])
        return forward(net, inp)[0]

    jet = forward_jet(net, np.concatenate([[x], z])[None, :])
    e1, ok1 = compare(jet.dx[0, 0], fd_derivative(f, x, 1e-3, 1))
    e2, ok2 = compare(jet.dxx[0, 0], fd_derivative(f, x, 1e-3, 2), rel_tol=REL_TOL)
    same = np.array_equal(jet.v, forward(net, np.concatenate([[x], z])[None, :]))
    return [
        CheckResult(f"forward_jet dx net{idx}", "jet_dx", e1, 1, ok1),
        CheckResult(f"forward_jet dxx net{idx}", "jet_dxx", e2, 1, ok2),
        CheckResult(f"forward_jet value net{idx}", "jet_value", 0.0 if same else np.inf, 1, same),
    ]


def check_input_gradient(rng, idx: int) -> CheckResult:
    n_in = int(rng.integers(2, 4))
    net = _perturb_biases(init_params(_random_widths(rng, n_in, 1), rng, name=f"c{idx}"), rng)
    x = rng.standard_normal((2, n_in))
    g = input_gradient(net, x)
    num = np.zeros_like(g)
    for r in range(x.shape[0]):
        for j in range(n_in):
            def f(v, r=r, j=j):
                y = x[r].astype(_XP)
                y[j] = v
                return forward(net, y)[0]

            num[r, j] = fd_derivative(f, x[r, j], 1e-3, 1)
    err, ok = compare(g, num)
    return CheckResult(f"input_gradient net{idx}", "input_gradient", err, g.size, ok)


def _small_bundle(rng, layout, d, mode, idx):
    hid = tuple(int(rng.integers(3, 7)) for _ in range(int(rng.integers(1, 3))))
    b = models.build_bundle(layout, rng, latent_dim=d, mode=mode, encoder_hidden=hid, generator_hidden=hid, discriminator_hidden=hid)
    for name, net in b.nets().items():
        net.name = f"{name}{idx}"
        _perturb_biases(net, rng)
    return b


def _sde_layout():
    return SensorLayout(coords_k=(-0.5, 0.5), coords_u=(0.1,), coords_f=(-0.6, 0.0, 0.7), coords_b=(-1.0, 1.0))


def check_losses(rng, idx: int) -> list[CheckResult]:
    """Every training objective, differentiated with respect to the net it updates."""
    d, n = 2, 3
    out = []
    for mode, layout in (("sde", _sde_layout()), ("process", SensorLayout(coords_f=(-0.8, 0.1, 0.9)))):
        b = _small_bundle(rng, layout, d, mode, f"{idx}{mode[0]}")
        real = rng.standard_normal((n, layout.n_total)) * 0.5
        xi = rng.standard_normal((n, d))
        eps = rng.uniform(size=n)
        w = training.LossWeights()
        gens = [g for _, g in sorted(b.generators.items())]

        def enc_loss(tape):
            enc = models.encode(b, real, tape)
            fake = models.assemble_fake(b, models.reparameterize(enc, xi)).vector
            return training.encoder_loss(real, fake, enc)[0]

        z_fixed = ad.value(models.reparameterize(models.encode(b, real), xi).z)

        def gen_loss(tape):
            fake = models.assemble_fake(b, z_fixed, tape).vector
            return training.generator_loss(fake, real, models.discriminate(b, fake), w.alpha, w.eta)

        fake_fixed = ad.value(models.assemble_fake(b, z_fixed).vector)

        def disc_loss(tape):
            return training.discriminator_loss(b.discriminator, real, fake_fixed, eps, w.gamma, w.lam, tape)[0]

        def pen_loss(tape):
            return ad.mean(training.gradient_penalty(b.discriminator, fake_fixed, real, eps, tape))

        def jet_loss(tape):
            k = models.gen_eval(b.gen_k, layout.coords_f, z_fixed, tape)
            u = models.gen_eval(b.gen_u, layout.coords_f, z_fixed, tape)
            return ad.sum(ad.mul(models.physics_residual(k, u), ad.add(u.dxx, k.dx)))

        tag = "sde" if mode == "sde" else "process"
        out += [
            _param_check(f"encoder_loss {tag} {idx}", f"encoder_{tag}", enc_loss, [b.encoder]),
            _param_check(f"generator_loss {tag} {idx}", f"generator_{tag}", gen_loss, gens),
            _param_check(f"discriminator_loss {tag} {idx}", f"discriminator_{tag}", disc_loss, [b.discriminator]),
            _param_check(f"gradient_penalty {tag} {idx}", "gradient_penalty", pen_loss, [b.discriminator]),
        ]
        if mode == "sde":
            out.append(_param_check(f"jet_residual {idx}", "jet_parameters", jet_loss, gens))
    return out


def run_suite(n_nets: int = 20, seed: int = 0) -> GradcheckReport:
    """``n_nets`` random small networks per family."""
    rng = np.random.default_rng(seed)
    report = GradcheckReport()
    for i in range(n_nets):
        report.results += check_jets(rng, i)
        report.results.append(check_input_gradient(rng, i))
    for i in range(n_nets):
        report.results += check_losses(rng, i)
    return report
