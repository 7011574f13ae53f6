"""Shared domain types: datasets on the unit cube, bin grids, histograms and seeded RNGs."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np
from sklearn.utils import check_array


class DomainError(ValueError):
    """A point or parameter lies outside the admissible domain."""


def check_unit_cube(X, dim=None, name="X"):
    """Validate ``X`` as an ``(n, dim)`` float array with all coordinates in [0, 1].

    One-dimensional input is read as ``n`` scalar points.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    X = check_array(X, dtype=np.float64, ensure_2d=True, ensure_min_samples=1,
                    input_name=name)
    if dim is not None and X.shape[1] != dim:
        raise DomainError(f"{name} has {X.shape[1]} columns, expected {dim}")
    bad = (X < 0.0) | (X > 1.0)
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise DomainError(
            f"value outside [0,1] at row {row}, column {col}: {X[row, col]!r}")
    return X


@dataclass(frozen=True, eq=False)
class Dataset:
    """An ordered collection of ``n >= 1`` points in ``[0,1]^dim``."""

    points: np.ndarray

    def __post_init__(self):
        pts = check_unit_cube(self.points, name="points").copy()
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.n

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.points.shape == other.points.shape and bool(
            np.array_equal(self.points, other.points))

    def __hash__(self):
        return hash((self.points.shape, self.points.tobytes()))


def as_dataset(data) -> Dataset:
    return data if isinstance(data, Dataset) else Dataset(data)


def load_dataset(path, dim: int) -> Dataset:
    """Read a headerless CSV with exactly ``dim`` numeric columns per row."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for i, rec in enumerate(csv.reader(fh)):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != dim:
                raise DomainError(
                    f"row {i}: expected {dim} columns, found {len(rec)}")
            row = []
            for j, cell in enumerate(rec):
                try:
                    v = float(cell)
                except ValueError:
                    raise DomainError(
                        f"row {i}, column {j}: cannot parse {cell!r}") from None
                if not 0.0 <= v <= 1.0:
                    raise DomainError(
                        f"value outside [0,1] at row {i}, column {j}: {v!r}")
                row.append(v)
            rows.append(row)
    if not rows:
        raise DomainError(f"{path}: no data rows")
    return Dataset(np.array(rows, dtype=float))


def save_dataset(data: Dataset, path) -> None:
    """Write one point per row with 17 significant digits (exact round trip)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for p in data.points:
            fh.write(",".join(f"{v:.17g}" for v in p))
            fh.write("\n")


@dataclass(frozen=True)
class BinGrid:
    """Equal-width partition of ``[0,1]^dim`` into ``bins_per_axis**dim`` cubes.

    Bins are half open, ``[l h, (l+1) h)``, except that coordinate 1.0 lands in
    the top bin. Flat indices put axis 0 fastest: ``sum_d idx_d * b**d``.
    """

    dim: int
    bins_per_axis: int

    def __post_init__(self):
        if self.dim < 1 or self.bins_per_axis < 1:
            raise DomainError("dim and bins_per_axis must be positive")

    @classmethod
    def from_total_bins(cls, m: int, dim: int) -> "BinGrid":
        b = round(m ** (1.0 / dim))
        for cand in (b - 1, b, b + 1):
            if cand >= 1 and cand ** dim == m:
                return cls(dim, cand)
        raise DomainError(f"m={m} is not a perfect {dim}-th power")

    @property
    def m(self) -> int:
        return self.bins_per_axis ** self.dim

    @property
    def h(self) -> float:
        return 1.0 / self.bins_per_axis

    @property
    def volume(self) -> float:
        """Lebesgue measure ``h**dim`` of a single bin."""
        return self.h ** self.dim

    def axis_indices(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, self.dim) if self.dim > 1 else X.reshape(-1, 1)
        if X.shape[1] != self.dim:
            raise DomainError(f"points have dim {X.shape[1]}, grid has {self.dim}")
        if ((X < 0.0) | (X > 1.0)).any():
            raise DomainError("point outside the unit cube")
        b = self.bins_per_axis
        idx = np.floor(X * b).astype(np.int64)
        np.clip(idx, 0, b - 1, out=idx)
        # floor(x*b) can be off by one at bin edges; compare against l/b directly
        idx -= (idx / b > X) & (idx > 0)
        idx += ((idx + 1) / b <= X) & (idx < b - 1)
        return idx

    def flat_index(self, axis_idx: np.ndarray) -> np.ndarray:
        weights = self.bins_per_axis ** np.arange(self.dim, dtype=np.int64)
        return axis_idx @ weights

    def unflatten(self, j) -> np.ndarray:
        j = np.asarray(j, dtype=np.int64)
        b = self.bins_per_axis
        return np.stack([(j // b ** d) % b for d in range(self.dim)], axis=-1)

    def lower_corners(self, j) -> np.ndarray:
        return self.unflatten(j) * self.h


def bin_index(grid: BinGrid, x) -> int:
    """Flat index of the bin containing the single point ``x``."""
    x = np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, -1)
    return int(grid.flat_index(grid.axis_indices(x))[0])


def histogram_counts(data, grid: BinGrid) -> np.ndarray:
    data = as_dataset(data)
    if data.dim != grid.dim:
        raise DomainError(f"dataset dim {data.dim} != grid dim {grid.dim}")
    flat = grid.flat_index(grid.axis_indices(data.points))
    return np.bincount(flat, minlength=grid.m).astype(np.int64)


@dataclass(frozen=True, eq=False)
class HistogramDensity:
    """Bin probabilities on a :class:`BinGrid`; density in bin j is ``probs[j] / h**r``."""

    grid: BinGrid
    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=float).reshape(-1)
        if p.shape[0] != self.grid.m:
            raise DomainError(f"expected {self.grid.m} probabilities, got {p.shape[0]}")
        if (p < 0).any():
            raise DomainError("negative bin probability")
        if abs(p.sum() - 1.0) > 1e-12:
            raise DomainError(f"bin probabilities sum to {p.sum()!r}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def heights(self) -> np.ndarray:
        return self.probs / self.grid.volume

    def pdf(self, X) -> np.ndarray:
        idx = self.grid.flat_index(self.grid.axis_indices(X))
        return self.heights[idx]


@dataclass(frozen=True)
class PrivacyBudget:
    alpha: float

    def __post_init__(self):
        if not (self.alpha >= 0.0) or math.isnan(self.alpha):
            raise DomainError(f"privacy budget must be >= 0, got {self.alpha!r}")


@dataclass
class SeededRng:
    """A named, seedable, splittable random stream.

    The same ``(seed, algorithm, stream)`` always yields the same draws.
    Instances are single-owner; hand children from :meth:`split` to
    independent consumers instead of sharing one.
    """

    seed: int
    algorithm: str = "PCG64"
    stream: tuple = ()
    generator: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2 ** 64:
            raise DomainError("seed must be a 64-bit unsigned integer")
        self.seed = int(self.seed)
        bitgen = getattr(np.random, self.algorithm, None)
        if bitgen is None or not isinstance(bitgen, type):
            raise DomainError(f"unknown bit generator {self.algorithm!r}")
        ss = np.random.SeedSequence(self.seed, spawn_key=tuple(self.stream))
        self.generator = np.random.Generator(bitgen(ss))

    def split(self, n: int) -> list["SeededRng"]:
        return [self.child(i) for i in range(n)]

    def child(self, *key: int) -> "SeededRng":
        return SeededRng(self.seed, self.algorithm, tuple(self.stream) + tuple(key))

    def uniform(self, size=None) -> np.ndarray:
        return self.generator.random(size)

    def open_uniform(self, size=None) -> np.ndarray:
        """Uniforms on the open interval (0, 1)."""
        u = self.generator.random(size)
        return np.where(u == 0.0, np.nextafter(0.0, 1.0), u)


RngLike = Union[SeededRng, int, None]


def check_rng(rng: RngLike) -> SeededRng:
    """Coerce ``None`` (fresh entropy), an int seed, or a SeededRng."""
    if isinstance(rng, SeededRng):
        return rng
    if rng is None:
        return SeededRng(int(np.random.SeedSequence().generate_state(1, np.uint64)[0]))
    if isinstance(rng, (int, np.integer)):
        return SeededRng(int(rng))
    raise TypeError(f"cannot build a SeededRng from {type(rng).__name__}")


def write_key_values(path, items) -> None:
    """Write ``key: value`` lines; floats keep full precision."""
    with open(Path(path), "w", encoding="utf-8") as fh:
        for k, v in items:
            fh.write(f"{k}: {format_value(v)}\n")


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple, np.ndarray)):
        return ",".join(format_value(x) for x in v)
    return str(v)


def read_key_values(path) -> dict:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition(":")
            out[key.strip()] = value.strip()
    return out
