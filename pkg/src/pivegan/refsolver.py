"""Finite-difference reference solver for -(1/10) (k u')' = f with u(+-1) = 0."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from .exceptions import (
    FormatError,
    InvalidCount,
    NonpositiveCoefficient,
    SensorOffGrid,
    ShapeMismatch,
    SingularSystem,
)
from .randproc import PathMatrix, SensorLayout, SnapshotSet, _jsonable, _parse_row, _read_header, format_row

REFERENCE_HEADER = "# pivegan-reference v1"
DIFFUSION_SCALE = 0.1
NODE_TOL = 1e-12


@dataclass(frozen=True)
class Grid1D:
    lo: float = -1.0
    hi: float = 1.0
    m: int = 101

    def __post_init__(self):
        if self.m < 3:
            raise InvalidCount(f"grid needs at least 3 nodes, got {self.m}")
        if not self.hi > self.lo:
            raise ValueError("grid requires hi > lo")

    @property
    def h(self) -> float:
        return (self.hi - self.lo) / (self.m - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.m)


def thomas(lower, diag, upper, rhs):
    """Solve tridiagonal systems, batched over leading axes.

    ``lower[..., i]`` multiplies ``x[i-1]`` and ``upper[..., i]`` multiplies
    ``x[i+1]``; ``lower[..., 0]`` and ``upper[..., -1]`` are ignored.
    """
    lower, diag, upper, rhs = np.broadcast_arrays(
        *(np.asarray(a, dtype=np.float64) for a in (lower, diag, upper, rhs))
    )
    n = diag.shape[-1]
    c = np.empty_like(diag)
    d = np.empty_like(diag)
    tiny = np.finfo(np.float64).tiny
    piv = diag[..., 0]
    if np.any(np.abs(piv) <= tiny):
        raise SingularSystem("zero pivot at row 0")
    c[..., 0] = upper[..., 0] / piv
    d[..., 0] = rhs[..., 0] / piv
    for i in range(1, n):
        piv = diag[..., i] - lower[..., i] * c[..., i - 1]
        if np.any(np.abs(piv) <= tiny):
            raise SingularSystem(f"zero pivot at row {i}")
        c[..., i] = upper[..., i] / piv
        d[..., i] = (rhs[..., i] - lower[..., i] * d[..., i - 1]) / piv
    x = np.empty_like(diag)
    x[..., -1] = d[..., -1]
    for i in range(n - 2, -1, -1):
        x[..., i] = d[..., i] - c[..., i] * x[..., i + 1]
    return x


def _operator_bands(grid: Grid1D, k_vals):
    k_half = 0.5 * (k_vals[..., 1:] + k_vals[..., :-1])
    scale = DIFFUSION_SCALE / grid.h**2
    left = k_half[..., :-1]
    right = k_half[..., 1:]
    return -scale * left, scale * (left + right), -scale * right


def solve_elliptic(grid: Grid1D, k_vals, f_vals) -> np.ndarray:
    """Conservative second-order scheme with arithmetic-mean interface k.

    Accepts a single field of length ``m`` or a batch of shape ``(n, m)``.
    """
    k_vals = np.asarray(k_vals, dtype=np.float64)
    f_vals = np.asarray(f_vals, dtype=np.float64)
    if k_vals.shape[-1] != grid.m or f_vals.shape[-1] != grid.m:
        raise ShapeMismatch(f"fields must have {grid.m} nodes")
    if np.any(~(k_vals > 0)):
        raise NonpositiveCoefficient("coefficient k must be strictly positive")
    lower, diag, upper = _operator_bands(grid, k_vals)
    shape = np.broadcast_shapes(k_vals.shape, f_vals.shape)
    u = np.zeros(shape)
    u[..., 1:-1] = thomas(lower, diag, upper, f_vals[..., 1:-1])
    return u


def discrete_residual(grid: Grid1D, k_vals, u_vals, f_vals) -> np.ndarray:
    """Interior residual of the scheme, ``A u - f``."""
    lower, diag, upper = _operator_bands(grid, np.asarray(k_vals, dtype=np.float64))
    u = np.asarray(u_vals, dtype=np.float64)
    au = lower * u[..., :-2] + diag * u[..., 1:-1] + upper * u[..., 2:]
    return au - np.asarray(f_vals, dtype=np.float64)[..., 1:-1]


@dataclass
class FieldPaths:
    grid: Grid1D
    k: PathMatrix
    f: PathMatrix
    u: PathMatrix


def simulate_fields(k_process, f_process, grid: Grid1D, n: int, rng) -> FieldPaths:
    """Sample (k, f) on the grid and solve for u, path by path."""
    nodes = grid.nodes
    k = k_process.sample(nodes, n, rng)
    f = f_process.sample(nodes, n, rng)
    try:
        u = solve_elliptic(grid, k.values, f.values)
    except (NonpositiveCoefficient, SingularSystem) as exc:
        bad = [j for j in range(n) if np.any(~(k.values[j] > 0))]
        raise type(exc)(f"{exc} (path {bad[0] if bad else '?'})") from None
    return FieldPaths(grid, k, f, PathMatrix(nodes, u))


@dataclass
class McReference:
    """Monte-Carlo statistics of u (and k, f) on the grid, population std."""

    grid: Grid1D
    mean: np.ndarray
    std: np.ndarray
    paths: PathMatrix
    k_paths: PathMatrix
    f_paths: PathMatrix

    @property
    def k_mean(self) -> np.ndarray:
        return self.k_paths.values.mean(axis=0)

    @property
    def k_std(self) -> np.ndarray:
        return self.k_paths.values.std(axis=0)

    def stats(self, process: str) -> tuple[np.ndarray, np.ndarray]:
        vals = {"u": self.paths, "k": self.k_paths, "f": self.f_paths}[process].values
        return vals.mean(axis=0), vals.std(axis=0)


def mc_reference(k_process, f_process, grid: Grid1D, n_paths: int, rng) -> McReference:
    if n_paths < 1:
        raise InvalidCount("n_paths must be positive")
    fields = simulate_fields(k_process, f_process, grid, n_paths, rng)
    u = fields.u.values
    mean = u.mean(axis=0)
    std = u.std(axis=0)
    mean[0] = mean[-1] = 0.0
    std[0] = std[-1] = 0.0
    return McReference(grid, mean, std, fields.u, fields.k, fields.f)


def read_at(paths: PathMatrix, coords, interpolate: bool = True) -> np.ndarray:
    """Values of every path at ``coords``: node snapping, else cubic spline."""
    coords = np.asarray(coords, dtype=np.float64).reshape(-1)
    nodes = paths.coords
    out = np.empty((paths.n_paths, coords.size))
    spline = None
    for i, x in enumerate(coords):
        j = int(np.argmin(np.abs(nodes - x)))
        if abs(nodes[j] - x) <= NODE_TOL:
            out[:, i] = paths.values[:, j]
            continue
        if not interpolate or x < nodes[0] or x > nodes[-1]:
            raise SensorOffGrid(f"sensor at {x!r} is not a grid node")
        if spline is None:
            spline = CubicSpline(nodes, paths.values, axis=1)
        out[:, i] = spline(x)
    return out


def snapshots_from_solutions(
    fields: FieldPaths, layout: SensorLayout, interpolate: bool = True, meta=None
) -> SnapshotSet:
    n = fields.u.n_paths
    K = read_at(fields.k, layout.coords_k, interpolate) if layout.coords_k else np.zeros((n, 0))
    U = read_at(fields.u, layout.coords_u, interpolate) if layout.coords_u else np.zeros((n, 0))
    F = read_at(fields.f, layout.coords_f, interpolate) if layout.coords_f else np.zeros((n, 0))
    B = np.zeros((n, len(layout.coords_b)))
    return SnapshotSet(layout, K, U, F, B, meta=dict(meta or {}))


def write_reference(ref: McReference, path, meta=None) -> None:
    """Persist the reference as mean, std and paths rows per process (u, k, f)."""
    header = {
        "grid": {"lo": ref.grid.lo, "hi": ref.grid.hi, "m": ref.grid.m},
        "coords": ref.paths.coords.tolist(),
        "processes": ["u", "k", "f"],
        "n_paths": ref.paths.n_paths,
        "meta": _jsonable(meta or {}),
    }
    lines = [REFERENCE_HEADER, json.dumps(header, sort_keys=True)]
    lines += [format_row(ref.mean), format_row(ref.std)]
    lines += [format_row(r) for r in ref.paths.values]
    for pm in (ref.k_paths, ref.f_paths):
        mean, std = pm.values.mean(axis=0), pm.values.std(axis=0)
        lines += [format_row(mean), format_row(std)]
        lines += [format_row(r) for r in pm.values]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_reference(path) -> McReference:
    header, body = _read_header(path, REFERENCE_HEADER)
    try:
        grid = Grid1D(**header["grid"])
        n = int(header["n_paths"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"invalid reference metadata: {exc}", line=2) from None
    per = n + 2
    if len(body) != 3 * per:
        raise FormatError(f"expected {3 * per} data rows, found {len(body)}", line=3)
    rows = np.array([_parse_row(ln, i + 3, grid.m) for i, ln in enumerate(body)])
    nodes = grid.nodes
    u_block, k_block, f_block = rows[:per], rows[per : 2 * per], rows[2 * per :]
    return McReference(
        grid,
        u_block[0],
        u_block[1],
        PathMatrix(nodes, u_block[2:]),
        PathMatrix(nodes, k_block[2:]),
        PathMatrix(nodes, f_block[2:]),
    )



def write_paths(paths: PathMatrix, path, meta=None) -> None:
    """Reference for a directly observed process: coordinates, mean, std, paths."""
    header = {
        "kind": "paths",
        "coords": paths.coords.tolist(),
        "n_paths": paths.n_paths,
        "meta": _jsonable(meta or {}),
    }
    vals = paths.values
    lines = [REFERENCE_HEADER, json.dumps(header, sort_keys=True)]
    lines += [format_row(vals.mean(axis=0)), format_row(vals.std(axis=0))]
    lines += [format_row(r) for r in vals]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_paths(path) -> PathMatrix:
    header, body = _read_header(path, REFERENCE_HEADER)
    try:
        coords = np.asarray(header["coords"], dtype=np.float64)
        n = int(header["n_paths"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"invalid reference metadata: {exc}", line=2) from None
    if len(body) != n + 2:
        raise FormatError(f"expected {n + 2} data rows, found {len(body)}", line=3)
    rows = [_parse_row(ln, i + 3, coords.size) for i, ln in enumerate(body)]
    return PathMatrix(coords, np.array(rows[2:]).reshape(n, coords.size))


def read_any_reference(path):
    """:class:`McReference` for SDE references, :class:`PathMatrix` for process paths."""
    header, _ = _read_header(path, REFERENCE_HEADER)
    return read_paths(path) if header.get("kind") == "paths" else read_reference(path)
