"""Scikit-learn style front end: ``fit`` on snapshots, ``sample`` paths at coordinates."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from . import training
from .exceptions import ConfigError, ShapeMismatch
from .models import gen_values
from .randproc import PathMatrix, SensorLayout, SnapshotSet


def check_snapshots(X, layout: SensorLayout = None) -> SnapshotSet:
    """Accept a :class:`SnapshotSet` or an ``(N, n_total)`` matrix plus its layout."""
    if isinstance(X, SnapshotSet):
        if layout is not None and layout != X.layout:
            raise ShapeMismatch("layout argument disagrees with the snapshot set")
        return X
    if layout is None:
        raise ConfigError("a SensorLayout is required for raw snapshot matrices", field="layout")
    mat = check_array(X, dtype=np.float64, ensure_min_samples=1)
    return SnapshotSet.from_matrix(layout, mat)


def check_coords(coords, lo: float = -1.0, hi: float = 1.0) -> np.ndarray:
    c = check_array(np.asarray(coords, dtype=np.float64).reshape(1, -1), ensure_min_features=1).ravel()
    if np.any(c < lo - 1e-12) or np.any(c > hi + 1e-12):
        raise ConfigError(f"coordinates must lie in [{lo}, {hi}]", field="coords")
    return c


class PiveganEstimator(BaseEstimator):
    """Trains the encoder/generator/critic triple on a snapshot set.

    ``mode`` is one of ``process``, ``forward``, ``inverse`` or ``mixed``.
    After ``fit``, ``checkpoints_`` holds the late-training generator copies
    and ``sample`` draws prior-driven paths from them.
    """

    def __init__(
        self,
        mode: str = "process",
        epochs: int = 2000,
        latent_dim: int = 4,
        alpha: float = 50.0,
        eta: float = 0.1,
        gamma: float = 1.0,
        lam: float = 0.1,
        n_critic: int = 5,
        lr: float = 1e-4,
        encoder_hidden: tuple = (128,) * 4,
        generator_hidden: tuple = (128,) * 4,
        discriminator_hidden: tuple = (128,) * 4,
        random_state: int = 0,
    ):
        self.mode = mode
        self.epochs = epochs
        self.latent_dim = latent_dim
        self.alpha = alpha
        self.eta = eta
        self.gamma = gamma
        self.lam = lam
        self.n_critic = n_critic
        self.lr = lr
        self.encoder_hidden = encoder_hidden
        self.generator_hidden = generator_hidden
        self.discriminator_hidden = discriminator_hidden
        self.random_state = random_state

    def _train_config(self) -> training.TrainConfig:
        if self.mode not in training.MODES:
            raise ConfigError(f"unknown mode {self.mode!r}", field="mode")
        weights = training.LossWeights(self.alpha, self.eta, self.gamma, self.lam, int(self.n_critic))
        return training.TrainConfig(
            epochs=int(self.epochs),
            latent_dim=int(self.latent_dim),
            weights=weights,
            lr=float(self.lr),
            encoder_hidden=tuple(self.encoder_hidden),
            generator_hidden=tuple(self.generator_hidden),
            discriminator_hidden=tuple(self.discriminator_hidden),
            seed=int(self.random_state),
        )

    def fit(self, X, y=None, layout: SensorLayout = None):
        snaps = check_snapshots(X, layout)
        cfg = self._train_config()
        if self.mode == "process":
            state, reports = training.train_process(cfg, snaps)
        else:
            state, reports = training.train_sde(cfg, snaps, self.mode)
        self.layout_ = snaps.layout
        self.bundle_ = state.bundle
        self.loss_history_ = reports
        ring = state.ring or [(state.epoch, {k: g.copy() for k, g in state.bundle.generators.items()})]
        self.checkpoints_ = [gens for _, gens in ring]
        self.checkpoint_epochs_ = [e for e, _ in ring]
        self.n_features_in_ = snaps.layout.n_total
        return self

    def sample(self, coords, n_samples: int = 1000, process: str = None, random_state=None) -> PathMatrix:
        """Paths of ``process`` (default ``f`` in process mode, else ``u``).

        Each row uses one prior draw and one checkpoint, cycling through the
        ensemble so every checkpoint contributes equally.
        """
        check_is_fitted(self, "checkpoints_")
        c = check_coords(coords, self.layout_.lo, self.layout_.hi)
        if int(n_samples) < 1:
            raise ConfigError("n_samples must be positive", field="n_samples")
        process = process or ("f" if self.mode == "process" else "u")
        if process not in self.checkpoints_[0]:
            raise ConfigError(f"no generator for process {process!r} in mode {self.mode}", field="process")
        rng = np.random.default_rng(self.random_state if random_state is None else random_state)
        z = rng.standard_normal((int(n_samples), int(self.latent_dim)))
        which = np.arange(int(n_samples)) % len(self.checkpoints_)
        out = np.empty((int(n_samples), c.size))
        for i, gens in enumerate(self.checkpoints_):
            rows = which == i
            if rows.any():
                out[rows] = gen_values(gens[process], c, z[rows])
        return PathMatrix(c, out)
