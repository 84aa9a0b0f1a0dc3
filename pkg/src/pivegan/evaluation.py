"""Distribution metrics and checkpoint-ensemble evaluation on validation coordinates."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from math import gcd
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.stats import wasserstein_distance

from .autodiff import MlpNet
from .exceptions import (
    CoordMismatch,
    DegenerateInput,
    EmptyEnsemble,
    EmptySample,
    ShapeMismatch,
    ZeroReference,
)
from .models import gen_values
from .randproc import PathMatrix
from .refsolver import McReference

N_EIGS = 10
QUANTILE_CAP = 10_000


def w1_1d(a, b) -> float:
    """Empirical 1-Wasserstein distance between two 1-D samples."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise EmptySample("both samples must be nonempty")
    if a.size == b.size:
        return float(np.mean(np.abs(np.sort(a) - np.sort(b))))
    lcm = a.size * b.size // gcd(a.size, b.size)
    if lcm <= QUANTILE_CAP:
        # common refinement of both empirical quantile functions: exact
        u = (np.arange(lcm) + 0.5) / lcm
        qa = np.sort(a)[np.floor(u * a.size).astype(int)]
        qb = np.sort(b)[np.floor(u * b.size).astype(int)]
        return float(np.mean(np.abs(qa - qb)))
    return float(wasserstein_distance(a, b))


def _check_pair(gen: PathMatrix, ref: PathMatrix):
    if gen.coords.shape != ref.coords.shape or not np.allclose(gen.coords, ref.coords, rtol=0, atol=1e-12):
        raise CoordMismatch("generated and reference paths use different coordinates")


def path_w1(gen: PathMatrix, ref: PathMatrix) -> float:
    """Mean over coordinates of the marginal W1 distances."""
    _check_pair(gen, ref)
    return float(np.mean([w1_1d(gen.values[:, i], ref.values[:, i]) for i in range(gen.coords.size)]))


def pca_eigs(X) -> np.ndarray:
    """Descending eigenvalues of the 1/(N-1) sample covariance of the rows of ``X``."""
    vals = X.values if isinstance(X, PathMatrix) else np.asarray(X, dtype=np.float64)
    if vals.ndim != 2:
        raise ShapeMismatch("observation matrix must be 2-D")
    n, m = vals.shape
    if n < 2:
        raise DegenerateInput(f"need at least two paths, got {n}")
    centred = vals - vals.mean(axis=0)
    cov = centred.T @ centred / (n - 1)
    eig = np.linalg.eigvalsh(cov)[::-1][: min(n - 1, m)]
    return np.clip(eig, 0.0, None)


def eig_row(eigs, k: int = N_EIGS) -> np.ndarray:
    """First ``k`` eigenvalues, zero padded."""
    out = np.zeros(k)
    e = np.asarray(eigs, dtype=np.float64)[:k]
    out[: e.size] = e
    return out


def relative_l2(est, ref) -> float:
    est = np.asarray(est, dtype=np.float64).ravel()
    ref = np.asarray(ref, dtype=np.float64).ravel()
    if est.shape != ref.shape:
        raise ShapeMismatch(f"lengths differ: {est.size} vs {ref.size}")
    denom = np.linalg.norm(ref)
    if denom == 0:
        raise ZeroReference("reference has zero norm")
    return float(np.linalg.norm(est - ref) / denom)


# ---------------------------------------------------------------- ensembles


def draw_paths(checkpoint, process: str, coords, z) -> np.ndarray:
    """Paths ``(n, M)`` of one checkpoint: a generator mapping or a callable."""
    if callable(checkpoint):
        return np.asarray(checkpoint(process, coords, z), dtype=np.float64)
    net = checkpoint[process] if process in checkpoint else checkpoint[f"gen_{process}"]
    if not isinstance(net, MlpNet):
        raise TypeError(f"checkpoint entry for {process!r} is not a network")
    return gen_values(net, coords, z)


@dataclass
class EnsembleStats:
    mean: np.ndarray
    std: np.ndarray
    paths: list
    metrics: list
    metric_mean: Optional[dict] = None


def ensemble_stats(
    checkpoints: Sequence,
    coords,
    n_noise: int,
    d: int,
    rng: np.random.Generator,
    process: str = "u",
    metric: Optional[Callable] = None,
) -> EnsembleStats:
    """Prior-driven samples of every checkpoint.

    ``metric(paths) -> dict`` is evaluated per checkpoint and averaged; the
    mean/std fields pool all checkpoints' samples (population std).
    """
    if not checkpoints:
        raise EmptyEnsemble("no checkpoints to evaluate")
    coords = np.asarray(coords, dtype=np.float64)
    per, metrics = [], []
    for ck in checkpoints:
        z = rng.standard_normal((n_noise, d))
        pm = PathMatrix(coords, draw_paths(ck, process, coords, z))
        per.append(pm)
        if metric is not None:
            metrics.append(metric(pm))
    pooled = np.concatenate([p.values for p in per], axis=0)
    avg = None
    if metrics:
        avg = {k: float(np.mean([m[k] for m in metrics])) for k in metrics[0]}
    return EnsembleStats(pooled.mean(axis=0), pooled.std(axis=0), per, metrics, avg)


@dataclass
class EvalReport:
    """Checkpoint-averaged metrics of one trained model.

    ``w1_mean`` averages per-coordinate W1 across coordinates (marginal
    coupling) and then across checkpoints.
    """

    mode: str
    w1_mean: float
    eigenvalues: list
    rel_err_mean_u: Optional[float] = None
    rel_err_std_u: Optional[float] = None
    rel_err_mean_k: Optional[float] = None
    rel_err_std_k: Optional[float] = None
    per_checkpoint: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    w1_convention: str = "per-coordinate marginal W1, averaged over coordinates"

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(**d)


def _process_metric(ref_paths: PathMatrix, ref_mean=None, ref_std=None):
    def metric(pm: PathMatrix) -> dict:
        out = {"w1": path_w1(pm, ref_paths)}
        if ref_mean is not None:
            out["rel_err_mean"] = relative_l2(pm.values.mean(axis=0), ref_mean)
            out["rel_err_std"] = relative_l2(pm.values.std(axis=0), ref_std)
        return out

    return metric


def _reference_paths(reference, process):
    if isinstance(reference, McReference):
        ref_paths = {"u": reference.paths, "k": reference.k_paths, "f": reference.f_paths}[process]
        mean, std = reference.stats(process)
        return ref_paths, mean, std
    return reference, None, None


def evaluate_run(
    checkpoints: Sequence,
    reference,
    mode: str,
    latent_dim: int,
    rng: np.random.Generator,
    n_noise: int = 1000,
    meta=None,
) -> EvalReport:
    """Evaluate a checkpoint ensemble against reference paths at their coordinates.

    ``reference`` is a :class:`McReference` for SDE modes (u and k are scored)
    or a :class:`PathMatrix` of resampled process paths in process mode.
    """
    if not checkpoints:
        raise EmptyEnsemble("no checkpoints to evaluate")
    processes = ("f",) if mode == "process" else ("u", "k")
    results = {}
    for proc in processes:
        ref_paths, mean, std = _reference_paths(reference, proc)
        stats = ensemble_stats(
            checkpoints, ref_paths.coords, n_noise, latent_dim, rng, proc, _process_metric(ref_paths, mean, std)
        )
        eig = np.mean([eig_row(pca_eigs(p)) for p in stats.paths], axis=0)
        results[proc] = (stats, eig)
    head = processes[0]
    stats, eig = results[head]
    report = EvalReport(
        mode=mode,
        w1_mean=stats.metric_mean["w1"],
        eigenvalues=[float(v) for v in eig],
        per_checkpoint=[
            {p: results[p][0].metrics[i] for p in processes} for i in range(len(checkpoints))
        ],
        meta=dict(meta or {}),
    )
    for p in processes:
        if p in ("u", "k"):
            setattr(report, f"rel_err_mean_{p}", results[p][0].metric_mean["rel_err_mean"])
            setattr(report, f"rel_err_std_{p}", results[p][0].metric_mean["rel_err_std"])
    report.meta.setdefault("n_noise", n_noise)
    report.meta.setdefault("n_checkpoints", len(checkpoints))
    report.meta.setdefault("coords", [float(c) for c in results[head][0].paths[0].coords])
    report.meta["fields"] = {
        p: {"mean": results[p][0].mean.tolist(), "std": results[p][0].std.tolist()} for p in processes
    }
    return report


def aggregate(reports: Sequence[EvalReport]) -> dict:
    """Cross-seed mean and population std of every scalar metric."""
    if not reports:
        raise EmptyEnsemble("no reports to aggregate")
    out = {}
    for key in ("w1_mean", "rel_err_mean_u", "rel_err_std_u", "rel_err_mean_k", "rel_err_std_k"):
        vals = [getattr(r, key) for r in reports]
        if any(v is None for v in vals):
            continue
        out[key] = {"mean": float(np.mean(vals)), "std": float(np.std(vals))}
    eig = np.array([r.eigenvalues for r in reports])
    out["eigenvalues"] = {"mean": eig.mean(axis=0).tolist(), "std": eig.std(axis=0).tolist()}
    out["n_seeds"] = len(reports)
    return out


def write_eig_csv(rows, path) -> None:
    """Table-style eigenvalue rows: exactly ``N_EIGS`` columns."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([f"lambda_{i + 1}" for i in range(N_EIGS)])
        for r in rows:
            w.writerow(["%.17g" % v for v in eig_row(r)])


def write_field_csv(report: EvalReport, reference, path) -> None:
    """Plot data: coordinate, generated mean/std and reference mean/std per process."""
    fields = report.meta["fields"]
    coords = report.meta["coords"]
    cols, data = ["x"], [coords]
    for p, f in sorted(fields.items()):
        ref_paths, mean, std = _reference_paths(reference, p)
        if mean is None:
            mean, std = ref_paths.values.mean(axis=0), ref_paths.values.std(axis=0)
        cols += [f"mean_{p}", f"std_{p}", f"ref_mean_{p}", f"ref_std_{p}"]
        data += [f["mean"], f["std"], list(mean), list(std)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in zip(*data):
            w.writerow(["%.17g" % v for v in row])


def read_report(path) -> EvalReport:
    return EvalReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
