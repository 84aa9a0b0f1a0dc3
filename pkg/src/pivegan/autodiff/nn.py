"""Dense tanh networks with value, spatial-jet and input-gradient passes."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from ..exceptions import FormatError, NonScalarOutput, ShapeMismatch
from . import tape as ad

CHECKPOINT_HEADER = "# pivegan-checkpoint v1"


@dataclass
class MlpNet:
    """Feed-forward net: tanh on hidden layers, identity on the output layer.

    ``weights[i]`` has shape ``(widths[i], widths[i + 1])``.
    """

    widths: tuple
    weights: list = field(default_factory=list)
    biases: list = field(default_factory=list)
    name: str = "net"

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)
        if len(self.widths) < 2 or min(self.widths) < 1:
            raise ShapeMismatch(f"invalid widths {self.widths}")
        if not self.weights:
            self.weights = [np.zeros((a, b)) for a, b in zip(self.widths, self.widths[1:])]
            self.biases = [np.zeros(b) for b in self.widths[1:]]
        if len(self.weights) != len(self.widths) - 1 or len(self.biases) != len(self.weights):
            raise ShapeMismatch("parameter list does not match widths")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.widths[i], self.widths[i + 1]) or b.shape != (self.widths[i + 1],):
                raise ShapeMismatch(f"layer {i} parameters do not match widths {self.widths}")

    @property
    def n_in(self) -> int:
        return self.widths[0]

    @property
    def n_out(self) -> int:
        return self.widths[-1]

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def param_keys(self) -> list[tuple]:
        keys = []
        for i in range(len(self.weights)):
            keys += [(self.name, "W", i), (self.name, "b", i)]
        return keys

    def grads_from(self, grad_map: dict) -> list[np.ndarray]:
        return [grad_map[k] for k in self.param_keys()]

    def copy(self, name=None) -> "MlpNet":
        return MlpNet(
            self.widths,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            name=self.name if name is None else name,
        )

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params()])

    def set_flat(self, theta) -> None:
        theta = np.asarray(theta, dtype=np.float64)
        pos = 0
        for p in self.params():
            p[...] = theta[pos : pos + p.size].reshape(p.shape)
            pos += p.size

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params())


def init_params(widths: Sequence[int], rng: np.random.Generator, name: str = "net") -> MlpNet:
    """Glorot-uniform weights, zero biases."""
    widths = tuple(int(w) for w in widths)
    weights, biases = [], []
    for a, b in zip(widths, widths[1:]):
        bound = np.sqrt(6.0 / (a + b))
        weights.append(rng.uniform(-bound, bound, size=(a, b)))
        biases.append(np.zeros(b))
    return MlpNet(widths, weights, biases, name=name)


def _layers(net: MlpNet, tape):
    if tape is None:
        return list(zip(net.weights, net.biases))
    return [
        (tape.param((net.name, "W", i), w), tape.param((net.name, "b", i), b))
        for i, (w, b) in enumerate(zip(net.weights, net.biases))
    ]


def _check_input(net: MlpNet, x):
    shape = np.shape(ad.value(x))
    if len(shape) == 0 or shape[-1] != net.n_in:
        raise ShapeMismatch(f"{net.name} expects input width {net.n_in}, got shape {shape}")


def forward(net: MlpNet, x, tape=None):
    """Evaluate the network on ``x`` of shape ``(..., n_in)``.

    With ``tape`` the parameters are recorded as named leaves so the output is
    differentiable with respect to them; if ``x`` is itself a ``Var`` the pass
    is recorded on its tape either way.
    """
    _check_input(net, x)
    layers = _layers(net, tape)
    h = x
    for i, (w, b) in enumerate(layers):
        h = ad.add(ad.matmul(h, w), b)
        if i < len(layers) - 1:
            h = ad.tanh(h)
    return h


class Jet2(NamedTuple):
    """Value and first/second derivatives with respect to the spatial input."""

    v: object
    dx: object
    dxx: object


def tanh_second(h, s):
    """tanh'' expressed through h = tanh(a) and s = tanh'(a) = 1 - h^2."""
    return -2.0 * ad.mul(h, s)


def forward_jet(net: MlpNet, inputs, tape=None, order: int = 2) -> Jet2:
    """Propagate (value, d/dx, d2/dx2) where x is column 0 of ``inputs``.

    The remaining input columns (the latent code) are constants for the
    spatial derivatives.  Returned arrays have shape ``(..., n_out)``.
    ``order=1`` skips the second derivative (``dxx`` is then ``None``).
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    _check_input(net, inputs)
    layers = _layers(net, tape)
    w0, b0 = layers[0]
    a = ad.add(ad.matmul(inputs, w0), b0)
    a_x = ad.getitem(w0, slice(0, 1))  # (1, width): d(input)/dx = e_0
    a_xx = None
    for i, (w, b) in enumerate(layers):
        if i > 0:
            a = ad.add(ad.matmul(h, w), b)
            a_x = ad.matmul(h_x, w)
            if order == 2:
                a_xx = ad.matmul(h_xx, w)
        if i == len(layers) - 1:
            break
        h = ad.tanh(a)
        s = ad.sub(1.0, ad.square(h))
        h_x = ad.mul(s, a_x)
        if order == 2:
            h_xx = ad.mul(tanh_second(h, s), ad.square(a_x))
            if a_xx is not None:
                h_xx = ad.add(ad.mul(s, a_xx), h_xx)
    if len(layers) == 1:
        shape = np.shape(ad.value(a))
        a_x = ad.mul(a_x, np.ones(shape))
        a_xx = np.zeros(shape) if order == 2 else None
    return Jet2(a, a_x, a_xx)


def input_gradient(net: MlpNet, x, tape=None):
    """Gradient of a scalar-output net with respect to its input, row-wise.

    Computed by forward-mode tangent passes, one per input coordinate and
    batched along a new axis, using only taped primitives so the result stays
    differentiable with respect to the parameters (``x`` shape ``(B, n_in)``,
    result shape ``(B, n_in)``).
    """
    _check_input(net, x)
    if net.n_out != 1:
        raise NonScalarOutput(f"{net.name} has {net.n_out} outputs")
    layers = _layers(net, tape)
    batch = np.shape(ad.value(x))[:-1]
    h = x
    tangent = None
    for i, (w, b) in enumerate(layers):
        a = ad.add(ad.matmul(h, w), b)
        # tangent[..., j, :] = d a / d x_j
        tangent = ad.reshape(w, (1,) * len(batch) + w.shape) if i == 0 else ad.matmul(tangent, w)
        if i == len(layers) - 1:
            break
        h = ad.tanh(a)
        s = ad.sub(1.0, ad.square(h))
        tangent = ad.mul(ad.reshape(s, batch + (1, s.shape[-1])), tangent)
    out = ad.reshape(tangent, np.shape(ad.value(tangent))[:-1])
    full = batch + (net.n_in,)
    if np.shape(ad.value(out)) != full:
        out = ad.add(out, np.zeros(full))
    return out


def write_checkpoint(nets: dict, path, meta=None) -> None:
    """Role-labelled sections: a JSON descriptor line, then one line per array."""
    lines = [CHECKPOINT_HEADER]
    for role, net in nets.items():
        lines.append(json.dumps({"role": role, "name": net.name, "widths": list(net.widths)}))
        lines += [",".join(repr(float(v)) for v in p.ravel()) for p in net.params()]
    if meta is not None:
        lines.append(json.dumps({"meta": meta}, sort_keys=True))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_checkpoint(path) -> dict:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != CHECKPOINT_HEADER:
        raise FormatError(f"missing header {CHECKPOINT_HEADER!r}", line=1)
    nets, pos = {}, 1
    while pos < len(lines):
        try:
            desc = json.loads(lines[pos])
        except json.JSONDecodeError:
            raise FormatError("expected a section descriptor", line=pos + 1) from None
        if "meta" in desc:
            pos += 1
            continue
        widths = tuple(desc["widths"])
        n_arrays = 2 * (len(widths) - 1)
        arrays = []
        for k in range(n_arrays):
            lineno = pos + 2 + k
            if lineno - 1 >= len(lines):
                raise FormatError("truncated parameter section", line=lineno)
            text = lines[lineno - 1].strip()
            arrays.append(np.array([float(v) for v in text.split(",")]) if text else np.zeros(0))
        net = MlpNet(widths, name=desc.get("name", desc["role"]))
        for dst, src in zip(net.params(), arrays):
            if src.size != dst.size:
                raise FormatError("parameter array has the wrong length", line=pos + 1, field=desc["role"])
            dst[...] = src.reshape(dst.shape)
        nets[desc["role"]] = net
        pos += 1 + n_arrays
    return nets
