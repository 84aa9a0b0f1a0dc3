"""Named random streams derived from a single master seed.

Every consumer of randomness (data simulation, latent noise, penalty mixing,
parameter initialisation, evaluation) gets its own generator so that adding
draws to one stream never shifts another.
"""
from __future__ import annotations

import numpy as np

STREAM_IDS = {
    "data": 0,
    "xi": 1,
    "eps": 2,
    "init": 3,
    "eval": 4,
    "reference": 5,
    "shuffle": 6,
}


def stream(master_seed: int, name: str, *substream: int) -> np.random.Generator:
    """Return the generator for ``name`` (optionally a counter-derived substream)."""
    try:
        sid = STREAM_IDS[name]
    except KeyError:
        raise KeyError(f"unknown random stream {name!r}") from None
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(sid, *substream))
    return np.random.default_rng(seq)


def streams(master_seed: int) -> dict[str, np.random.Generator]:
    return {name: stream(master_seed, name) for name in STREAM_IDS}
