"""Gaussian-process simulation, sensor placement and snapshot datasets."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .exceptions import CholeskyFailure, FormatError, InvalidCount, ShapeMismatch

SNAPSHOT_HEADER = "# pivegan-snapshots v1"
BLOCKS = ("K", "U", "F", "B")

KERNELS = ("squared_exponential", "exponential")
MEANS = ("zero", "constant", "sine")


@dataclass(frozen=True)
class GpSpec:
    """Gaussian process with a stationary kernel and a deterministic mean.

    ``kernel`` is ``"squared_exponential"`` (var * exp(-r^2 / (2 l^2))) or
    ``"exponential"`` (var * exp(-|r| / l)).  ``mean`` is ``"zero"``,
    ``"constant"`` (uses ``mean_value``) or ``"sine"``, the deterministic part
    of the log-coefficient, ``sin(1.5 pi (x + 1)) / 5``.
    """

    kernel: str = "squared_exponential"
    length_scale: float = 1.0
    variance_scale: float = 1.0
    mean: str = "zero"
    mean_value: float = 0.0

    def __post_init__(self):
        if self.kernel not in KERNELS:
            raise ValueError(f"kernel must be one of {KERNELS}, got {self.kernel!r}")
        if self.mean not in MEANS:
            raise ValueError(f"mean must be one of {MEANS}, got {self.mean!r}")
        if not self.length_scale > 0:
            raise ValueError("length_scale must be positive")
        # variance 0 is allowed for degenerate (deterministic) references
        if not self.variance_scale >= 0:
            raise ValueError("variance_scale must be nonnegative")

    def mean_fn(self, coords) -> np.ndarray:
        x = np.asarray(coords, dtype=np.float64)
        if self.mean == "zero":
            return np.zeros_like(x)
        if self.mean == "constant":
            return np.full_like(x, self.mean_value)
        return np.sin(1.5 * np.pi * (x + 1.0)) / 5.0

    def sample(self, coords, n, rng, noise=None) -> "PathMatrix":
        return sample_gp(self, coords, n, rng, noise=noise)

    def to_dict(self) -> dict:
        return {
            "type": "gp",
            "kernel": self.kernel,
            "length_scale": self.length_scale,
            "variance_scale": self.variance_scale,
            "mean": self.mean,
            "mean_value": self.mean_value,
        }


@dataclass(frozen=True)
class ExpTransformed:
    """Log-normal process ``exp(g(x))`` over a Gaussian process ``g``."""

    base: GpSpec

    def sample(self, coords, n, rng, noise=None) -> "PathMatrix":
        paths = sample_gp(self.base, coords, n, rng, noise=noise)
        return PathMatrix(paths.coords, np.exp(paths.values))

    def to_dict(self) -> dict:
        return {"type": "exp", "base": self.base.to_dict()}


def process_from_dict(d: dict):
    d = dict(d)
    kind = d.pop("type", "gp")
    if kind == "exp":
        return ExpTransformed(process_from_dict(d["base"]))
    return GpSpec(**d)


@dataclass(frozen=True)
class PathMatrix:
    """``values[j, i]`` is sample path ``j`` evaluated at ``coords[i]``."""

    coords: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.float64).reshape(-1)
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[1] != coords.size:
            raise ShapeMismatch(
                f"path values of shape {values.shape} do not match {coords.size} coords"
            )
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "values", values)

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]


def kernel_eval(spec: GpSpec, x, x2):
    """Covariance between ``x`` and ``x2`` (broadcasts over arrays)."""
    r = np.abs(np.asarray(x, dtype=np.float64) - np.asarray(x2, dtype=np.float64))
    if spec.kernel == "squared_exponential":
        k = np.exp(-(r**2) / (2.0 * spec.length_scale**2))
    else:
        k = np.exp(-r / spec.length_scale)
    k = spec.variance_scale * k
    return float(k) if np.ndim(k) == 0 else k


def gram_matrix(spec: GpSpec, coords: Sequence[float]) -> np.ndarray:
    x = np.asarray(coords, dtype=np.float64).reshape(-1)
    if x.size == 0:
        raise InvalidCount("gram_matrix needs at least one coordinate")
    return kernel_eval(spec, x[:, None], x[None, :]).reshape(x.size, x.size)


def jittered_cholesky(gram: np.ndarray, scale: float) -> np.ndarray:
    """Lower Cholesky factor of ``gram + eps I`` with escalating ``eps``."""
    if scale == 0:
        return np.zeros_like(gram)
    eps = 1e-10 * scale
    while eps <= 1e-6 * scale * (1 + 1e-9):
        try:
            return np.linalg.cholesky(gram + eps * np.eye(gram.shape[0]))
        except np.linalg.LinAlgError:
            eps *= 10.0
    raise CholeskyFailure(
        f"Cholesky factorisation failed with jitter up to {1e-6 * scale:g}"
    )


def sample_gp(spec: GpSpec, coords, n: int, rng: np.random.Generator, noise=None) -> PathMatrix:
    """Draw ``n`` paths as ``mean + xi @ L.T``.

    ``noise`` overrides the standard-normal draws (shape ``(n, len(coords))``).
    """
    if n < 1:
        raise InvalidCount(f"need at least one sample path, got {n}")
    x = np.asarray(coords, dtype=np.float64).reshape(-1)
    chol = jittered_cholesky(gram_matrix(spec, x), spec.variance_scale)
    if noise is None:
        noise = rng.standard_normal((n, x.size))
    else:
        noise = np.asarray(noise, dtype=np.float64).reshape(n, x.size)
    return PathMatrix(x, spec.mean_fn(x)[None, :] + noise @ chol.T)


def uniform_sensors(n: int, lo: float = -1.0, hi: float = 1.0) -> list[float]:
    """``n`` equally spaced coordinates including both endpoints; ``n=1`` gives the midpoint."""
    if n < 1:
        raise InvalidCount(f"sensor count must be positive, got {n}")
    if n == 1:
        return [0.5 * (lo + hi)]
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def _check_coords(name: str, coords: Sequence[float], lo: float, hi: float) -> tuple:
    c = tuple(float(v) for v in coords)
    for a, b in zip(c, c[1:]):
        if not b > a:
            raise ValueError(f"{name} must be strictly increasing")
    for v in c:
        if not lo <= v <= hi:
            raise ValueError(f"{name} coordinate {v} outside [{lo}, {hi}]")
    return c


@dataclass(frozen=True)
class SensorLayout:
    """Sensor coordinates of the k, u, f and boundary (b) observations."""

    coords_k: tuple = ()
    coords_u: tuple = ()
    coords_f: tuple = ()
    coords_b: tuple = ()
    lo: float = -1.0
    hi: float = 1.0

    def __post_init__(self):
        for name in ("coords_k", "coords_u", "coords_f", "coords_b"):
            object.__setattr__(
                self, name, _check_coords(name, getattr(self, name), self.lo, self.hi)
            )
        for v in self.coords_b:
            if v not in (self.lo, self.hi):
                raise ValueError(f"boundary sensor {v} is not on the domain boundary")

    @property
    def counts(self) -> dict[str, int]:
        return {
            "K": len(self.coords_k),
            "U": len(self.coords_u),
            "F": len(self.coords_f),
            "B": len(self.coords_b),
        }

    @property
    def n_total(self) -> int:
        return sum(self.counts.values())

    def block_coords(self, block: str) -> tuple:
        return getattr(self, "coords_" + block.lower())

    def slices(self) -> dict[str, slice]:
        """Column slices of each block inside the canonical K|U|F|B vector."""
        out, start = {}, 0
        for b in BLOCKS:
            n = self.counts[b]
            out[b] = slice(start, start + n)
            start += n
        return out

    def to_dict(self) -> dict:
        return {
            "coords_k": list(self.coords_k),
            "coords_u": list(self.coords_u),
            "coords_f": list(self.coords_f),
            "coords_b": list(self.coords_b),
            "lo": self.lo,
            "hi": self.hi,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SensorLayout":
        return cls(**d)


@dataclass
class SnapshotSet:
    """``N`` joint sensor readings; block arrays have shape ``(N, n_block)``."""

    layout: SensorLayout
    K: np.ndarray
    U: np.ndarray
    F: np.ndarray
    B: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n_rows = None
        for b in BLOCKS:
            arr = np.asarray(getattr(self, b), dtype=np.float64)
            if arr.ndim == 1 and arr.size == 0:
                arr = arr.reshape(0, 0)
            if arr.ndim != 2:
                raise ShapeMismatch(f"block {b} must be 2-D, got shape {arr.shape}")
            want = self.layout.counts[b]
            if arr.shape[1] != want and not (want == 0 and arr.shape[0] == 0):
                raise ShapeMismatch(
                    f"block {b} has {arr.shape[1]} columns, layout expects {want}"
                )
            if want == 0:
                arr = arr.reshape(arr.shape[0], 0)
            if n_rows is None and (want > 0 or arr.shape[0] > 0):
                n_rows = arr.shape[0]
            setattr(self, b, arr)
        n_rows = n_rows or 0
        for b in BLOCKS:
            arr = getattr(self, b)
            if self.layout.counts[b] == 0 and arr.shape[0] != n_rows:
                setattr(self, b, np.zeros((n_rows, 0)))
            elif arr.shape[0] != n_rows:
                raise ShapeMismatch(f"block {b} has {arr.shape[0]} rows, expected {n_rows}")

    @property
    def n_rows(self) -> int:
        return self.K.shape[0]

    def matrix(self) -> np.ndarray:
        """Rows concatenated in the canonical K|U|F|B order."""
        return np.concatenate([self.K, self.U, self.F, self.B], axis=1)

    @classmethod
    def from_matrix(cls, layout: SensorLayout, mat, meta=None) -> "SnapshotSet":
        mat = np.asarray(mat, dtype=np.float64)
        if mat.ndim != 2 or mat.shape[1] != layout.n_total:
            raise ShapeMismatch(
                f"matrix of shape {mat.shape} does not match layout width {layout.n_total}"
            )
        sl = layout.slices()
        return cls(layout, *(mat[:, sl[b]] for b in BLOCKS), meta=dict(meta or {}))

    def __eq__(self, other):
        if not isinstance(other, SnapshotSet):
            return NotImplemented
        return (
            self.layout == other.layout
            and self.meta == other.meta
            and all(np.array_equal(getattr(self, b), getattr(other, b)) for b in BLOCKS)
        )


def format_row(values) -> str:
    return ",".join("%.17g" % v for v in values)


def _parse_row(line: str, lineno: int, width: int) -> list[float]:
    text = line.strip()
    parts = text.split(",") if text else []
    if len(parts) != width:
        raise FormatError(
            f"row has {len(parts)} values, expected {width}", line=lineno
        )
    out = []
    for col, p in enumerate(parts):
        try:
            out.append(float(p))
        except ValueError:
            raise FormatError(f"not a number: {p!r}", line=lineno, field=col) from None
    return out


def _jsonable(obj: Any):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    return obj


def write_snapshots(snaps: SnapshotSet, path) -> None:
    header = {
        "layout": snaps.layout.to_dict(),
        "n_rows": snaps.n_rows,
        "meta": _jsonable(snaps.meta),
    }
    lines = [SNAPSHOT_HEADER, json.dumps(header, sort_keys=True)]
    lines += [format_row(row) for row in snaps.matrix()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _read_header(path, expected: str) -> tuple[dict, list[str]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != expected:
        raise FormatError(f"missing header {expected!r}", line=1)
    if len(lines) < 2:
        raise FormatError("missing metadata line", line=2)
    try:
        header = json.loads(lines[1])
    except json.JSONDecodeError as exc:
        raise FormatError(f"metadata is not valid JSON: {exc.msg}", line=2) from None
    return header, lines[2:]


def read_snapshots(path) -> SnapshotSet:
    header, body = _read_header(path, SNAPSHOT_HEADER)
    for key in ("layout", "n_rows"):
        if key not in header:
            raise FormatError("metadata missing key", line=2, field=key)
    try:
        layout = SensorLayout.from_dict(header["layout"])
    except (TypeError, ValueError) as exc:
        raise FormatError(f"invalid layout: {exc}", line=2, field="layout") from None
    body = [ln for ln in body if ln.strip() or layout.n_total == 0]
    n_rows = int(header["n_rows"])
    if len(body) != n_rows:
        raise FormatError(f"expected {n_rows} data rows, found {len(body)}", line=3)
    rows = [_parse_row(ln, i + 3, layout.n_total) for i, ln in enumerate(body)]
    mat = np.array(rows, dtype=np.float64).reshape(n_rows, layout.n_total)
    return SnapshotSet.from_matrix(layout, mat, meta=header.get("meta", {}))


def gp_snapshots(spec, coords, n: int, rng, meta=None) -> SnapshotSet:
    """Process-approximation dataset: only the F block is populated."""
    layout = SensorLayout(coords_f=tuple(coords))
    paths = spec.sample(layout.coords_f, n, rng)
    meta = dict(meta or {})
    meta.setdefault("f_spec", spec.to_dict())
    return SnapshotSet(layout, np.zeros((n, 0)), np.zeros((n, 0)), paths.values, np.zeros((n, 0)), meta)

