"""Adam with bias correction and a cosine-annealed learning rate."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..exceptions import NonFiniteLoss, OutOfRange, ShapeMismatch


def cosine_lr(step: float, horizon: float, base: float) -> float:
    """``base * (1 + cos(pi * step / horizon)) / 2`` for ``0 <= step <= horizon``."""
    if horizon <= 0 or not 0 <= step <= horizon:
        raise OutOfRange(f"step {step} outside [0, {horizon}]")
    return base * (1.0 + math.cos(math.pi * step / horizon)) / 2.0


@dataclass
class AdamState:
    shapes: list
    lr0: float = 1e-4
    horizon: int = 1
    beta1: float = 0.5
    beta2: float = 0.9
    eps: float = 1e-8
    step: int = 0
    lr: float = field(default=None)
    m: list = field(default=None)
    v: list = field(default=None)

    def __post_init__(self):
        self.shapes = [tuple(s) for s in self.shapes]
        if self.m is None:
            self.m = [np.zeros(s) for s in self.shapes]
            self.v = [np.zeros(s) for s in self.shapes]
        if self.lr is None:
            self.lr = self.lr0

    @classmethod
    def for_params(cls, params, **kw) -> "AdamState":
        return cls([p.shape for p in params], **kw)

    def schedule(self, epoch: int) -> float:
        """Set the learning rate for ``epoch`` from the cosine schedule."""
        self.lr = cosine_lr(epoch, self.horizon, self.lr0)
        return self.lr


def adam_step(params, grads, state: AdamState) -> None:
    """In-place Adam update of ``params`` at ``state.lr``."""
    if len(params) != len(state.m) or len(grads) != len(params):
        raise ShapeMismatch("parameter, gradient and moment lists differ in length")
    for p, g in zip(params, grads):
        if p.shape != np.shape(g):
            raise ShapeMismatch(f"gradient shape {np.shape(g)} != parameter shape {p.shape}")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        if not np.all(np.isfinite(p)):
            raise NonFiniteLoss("non-finite parameter after Adam step")
