"""Command-line front end: simulate, reference, train, eval and gradcheck.

Every invocation writes ``manifest_<command>.json`` into the output directory,
including failed runs.  Exit codes: 0 success, 2 configuration error,
3 numerical failure, 4 I/O error.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import replace
from importlib import metadata
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import evaluation, gradcheck, rng as rngmod, training
from .autodiff import read_checkpoint, write_checkpoint
from .exceptions import (
    CholeskyFailure,
    ConfigError,
    FormatError,
    LayoutModeMismatch,
    MissingArtifact,
    NonFiniteLoss,
    NonpositiveCoefficient,
    SingularSystem,
)
from .randproc import PathMatrix, gp_snapshots, read_snapshots, write_snapshots
from .refsolver import (
    Grid1D,
    mc_reference,
    read_any_reference,
    simulate_fields,
    snapshots_from_solutions,
    write_paths,
    write_reference,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
SNAPSHOT_FILE = "snapshots.csv"
REFERENCE_FILE = "reference.csv"


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


class Run:
    """Collects the file inventory for the manifest."""

    def __init__(self, command, out: Path, cfg=None, seeds=()):
        self.command = command
        self.out = out
        self.cfg = cfg
        self.seeds = list(seeds)
        self.files = []
        self.t0 = time.time()
        self.extra = {}

    def add(self, path: Path) -> Path:
        self.files.append(path)
        return path

    def manifest(self, status: str, code: int, error: str = None) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        body = {
            "command": self.command,
            "status": status,
            "exit_code": code,
            "error": error,
            "config_hash": self.cfg.config_hash() if self.cfg is not None else None,
            "master_seeds": self.seeds,
            "files": sorted(str(p.relative_to(self.out)) for p in self.files if p.exists()),
            "tool_version": _version(),
            "wall_clock_s": round(time.time() - self.t0, 3),
        }
        body.update(self.extra)
        path = self.out / f"manifest_{self.command}.json"
        path.write_text(json.dumps(body, indent=1, sort_keys=True) + "\n", encoding="utf-8")
        return path


def _load_config(args):
    cfg = cfgmod.load(args.config, desk=False) if args.config else cfgmod.preset(args.kind or "forward")
    if args.kind and args.config and args.kind != cfg.kind:
        raise ConfigError(f"--kind {args.kind} conflicts with the config file", field="kind")
    if args.desk:
        cfg = cfg.desk()
    if args.epochs is not None:
        cfg = replace(cfg, epochs=args.epochs)
    if args.seed is not None:
        cfg = replace(cfg, seeds=(int(args.seed),))
    return cfg


def _out_dir(args, cfg) -> Path:
    return Path(args.out if args.out else cfg.out)


# ---------------------------------------------------------------- commands


def _validation_coords(cfg):
    return np.linspace(-1.0, 1.0, cfg.n_validation)


def make_reference(cfg, seed: int, run: Run) -> Path:
    ref_rng = rngmod.stream(seed, "reference")
    path = run.add(run.out / REFERENCE_FILE)
    meta = {"seed": seed, "kind": cfg.kind}
    if cfg.kind == "process":
        paths = cfg.target.sample(_validation_coords(cfg), cfg.n_reference, ref_rng)
        write_paths(paths, path, meta={**meta, "process": cfg.target.to_dict()})
    else:
        ref = mc_reference(cfg.k_process, cfg.f_proc, Grid1D(m=cfg.grid_m), cfg.n_reference, ref_rng)
        write_reference(ref, path, meta={**meta, "k": cfg.k_process.to_dict(), "f": cfg.f_proc.to_dict()})
    return path


def make_snapshots(cfg, seed: int, run: Run) -> Path:
    rng = rngmod.stream(seed, "data")
    layout = cfg.layout()
    meta = {"seed": seed, "kind": cfg.kind, "n": cfg.n_snapshots}
    if cfg.kind == "process":
        snaps = gp_snapshots(cfg.target, layout.coords_f, cfg.n_snapshots, rng, meta=meta)
    else:
        fields = simulate_fields(cfg.k_process, cfg.f_proc, Grid1D(m=cfg.grid_m), cfg.n_snapshots, rng)
        meta.update(k=cfg.k_process.to_dict(), f=cfg.f_proc.to_dict(), k_single_sensor="midpoint" if cfg.n_k == 1 else None)
        snaps = snapshots_from_solutions(fields, layout, interpolate=cfg.interpolate, meta=meta)
    path = run.add(run.out / SNAPSHOT_FILE)
    write_snapshots(snaps, path)
    return path


def cmd_simulate(cfg, run: Run) -> int:
    seed = cfg.seeds[0]
    make_snapshots(cfg, seed, run)
    make_reference(cfg, seed, run)
    return EXIT_OK


def cmd_reference(cfg, run: Run) -> int:
    make_reference(cfg, cfg.seeds[0], run)
    return EXIT_OK


def seed_dir(out: Path, seed: int) -> Path:
    return out / f"seed_{seed}"


def train_one(cfg, snaps, seed: int, run: Run):
    d = seed_dir(run.out, seed)
    (d / "checkpoints").mkdir(parents=True, exist_ok=True)
    tcfg = cfg.train_config(seed)
    try:
        if cfg.mode == "process":
            state, reports = training.train_process(tcfg, snaps)
        else:
            state, reports = training.train_sde(tcfg, snaps, cfg.mode)
    except NonFiniteLoss as exc:
        raise NonFiniteLoss(f"seed {seed}: {exc}") from None
    training.write_loss_csv(reports, run.add(d / "loss.csv"))
    ring = state.ring or [(-1, {k: g.copy() for k, g in state.bundle.generators.items()})]
    for epoch, gens in ring:
        name = "init" if epoch < 0 else f"{epoch:06d}"
        write_checkpoint({f"gen_{k}": g for k, g in sorted(gens.items())}, run.add(d / "checkpoints" / f"ckpt_{name}.txt"), meta={"epoch": epoch, "seed": seed})
    write_checkpoint(state.bundle.nets(), run.add(d / "final.txt"), meta={"epoch": state.epoch, "seed": seed, "counters": state.counters})
    return state, reports


def cmd_train(cfg, run: Run) -> int:
    path = run.out / SNAPSHOT_FILE
    if not path.exists():
        raise MissingArtifact(f"{path} not found; run 'simulate' first")
    snaps = read_snapshots(path)
    if snaps.layout != cfg.layout():
        raise LayoutModeMismatch("snapshot layout does not match the configuration")
    for seed in cfg.seeds:
        train_one(cfg, snaps, seed, run)
    return EXIT_OK


def load_checkpoints(d: Path) -> list:
    files = sorted((d / "checkpoints").glob("ckpt_*.txt"))
    if not files:
        raise MissingArtifact(f"no checkpoints under {d}")
    out = []
    for f in files:
        nets = read_checkpoint(f)
        out.append({k[len("gen_"):]: v for k, v in nets.items()})
    return out


def cmd_eval(cfg, run: Run) -> int:
    ref_path = run.out / REFERENCE_FILE
    if not ref_path.exists():
        raise MissingArtifact(f"{ref_path} not found; run 'simulate' or 'reference' first")
    reference = read_any_reference(ref_path)
    reports = []
    for seed in cfg.seeds:
        d = seed_dir(run.out, seed)
        if not d.exists():
            raise MissingArtifact(f"run directory {d} not found; run 'train' first")
        ckpts = load_checkpoints(d)
        rep = evaluation.evaluate_run(
            ckpts, reference, cfg.mode, cfg.latent_dim, rngmod.stream(seed, "eval"), cfg.n_noise, meta={"seed": seed}
        )
        (run.add(d / "eval.json")).write_text(rep.to_json() + "\n", encoding="utf-8")
        evaluation.write_field_csv(rep, reference, run.add(d / "fields.csv"))
        reports.append(rep)
    agg = evaluation.aggregate(reports)
    agg["seeds"] = list(cfg.seeds)
    run.add(run.out / "eval_aggregate.json").write_text(json.dumps(agg, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    rows = [r.eigenvalues for r in reports]
    ref_paths = reference if isinstance(reference, PathMatrix) else reference.paths
    rows.append(list(evaluation.eig_row(evaluation.pca_eigs(ref_paths))))
    evaluation.write_eig_csv(rows, run.add(run.out / "eigenvalues.csv"))
    return EXIT_OK


def cmd_gradcheck(run: Run, n_nets: int = 20) -> int:
    report = gradcheck.run_suite(n_nets=n_nets)
    lines = report.lines()
    (run.add(run.out / "gradcheck.txt")).write_text("\n".join(lines) + "\n", encoding="utf-8")
    for line in lines:
        if not line.startswith("PASS"):
            print(line)
    print("gradcheck:", "all checks passed" if report.passed else f"{len(report.failures())} failures")
    run.extra["gradcheck"] = {"passed": report.passed, "by_family": report.by_family()}
    return EXIT_OK if report.passed else EXIT_NUMERIC


# ---------------------------------------------------------------- entry


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pivegan", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("simulate", "reference", "train", "eval", "gradcheck"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="dotted-key configuration file")
        sp.add_argument("--kind", choices=cfgmod.KINDS, help="preset used when no config file is given")
        sp.add_argument("--seed", type=int, help="single master seed (overrides the seeds list)")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--desk", action="store_true", help="desk scale: N = 200, 2000 epochs")
        sp.add_argument("--epochs", type=int, help="override the number of epochs")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out or ".")
    run = Run(args.command, out)
    try:
        if args.command == "gradcheck":
            return _finish(run, cmd_gradcheck(run))
        cfg = _load_config(args)
        run.cfg, run.seeds = cfg, list(cfg.seeds)
        run.out = _out_dir(args, cfg)
        run.out.mkdir(parents=True, exist_ok=True)
        if args.config:
            # the effective configuration (after flags) is kept with the run
            run.add(run.out / f"config_{args.command}.txt").write_text(cfg.dumps(), encoding="utf-8")
        handler = {"simulate": cmd_simulate, "reference": cmd_reference, "train": cmd_train, "eval": cmd_eval}
        return _finish(run, handler[args.command](cfg, run))
    except (ConfigError, LayoutModeMismatch) as exc:
        return _fail(run, EXIT_CONFIG, exc)
    except (NonFiniteLoss, CholeskyFailure, NonpositiveCoefficient, SingularSystem, FloatingPointError) as exc:
        return _fail(run, EXIT_NUMERIC, exc)
    except (OSError, MissingArtifact, FormatError) as exc:
        return _fail(run, EXIT_IO, exc)


def _finish(run: Run, code: int) -> int:
    run.manifest("ok" if code == EXIT_OK else "failed", code)
    return code


def _fail(run: Run, code: int, exc: Exception) -> int:
    print(f"pivegan {run.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
    try:
        run.manifest("failed", code, f"{type(exc).__name__}: {exc}")
    except OSError:
        pass
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
