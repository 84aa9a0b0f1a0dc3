from . import tape
from .nn import (
    Jet2,
    MlpNet,
    forward,
    forward_jet,
    init_params,
    input_gradient,
    read_checkpoint,
    write_checkpoint,
)
from .optim import AdamState, adam_step, cosine_lr
from .tape import Tape, Var, backward

__all__ = [
    "AdamState",
    "Jet2",
    "MlpNet",
    "Tape",
    "Var",
    "adam_step",
    "backward",
    "cosine_lr",
    "forward",
    "forward_jet",
    "init_params",
    "input_gradient",
    "read_checkpoint",
    "tape",
    "write_checkpoint",
]
