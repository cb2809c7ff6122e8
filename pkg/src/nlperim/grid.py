"""Discretization: reference sets, uniform Cartesian grids, scalar fields.

The reference set Omega (a ball or a box) sits strictly inside a bounding box
Lambda. Cells are tagged interior when their center lies in Omega (open, so a
center exactly on the boundary is exterior -- the tie is deterministic).
Scalar fields carry one value per cell of Lambda; exterior cells hold the
boundary datum bit-exactly and are immutable through the public interface.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .errors import ValidationError

_DIV_TOL = 1e-9


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValidationError("ball radius must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    @property
    def dimension(self) -> int:
        return len(self.center)

    def contains(self, pts: np.ndarray) -> np.ndarray:
        diff = pts - np.asarray(self.center)
        return np.sum(diff * diff, axis=1) < self.radius**2

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        c = np.asarray(self.center)
        return c - self.radius, c + self.radius


@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(float(v) for v in self.lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in self.hi))
        if len(self.lo) != len(self.hi):
            raise ValidationError("box lo/hi dimension mismatch")
        if not all(a < b for a, b in zip(self.lo, self.hi)):
            raise ValidationError("box requires lo < hi on every axis")

    @property
    def dimension(self) -> int:
        return len(self.lo)

    def contains(self, pts: np.ndarray) -> np.ndarray:
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        return np.all((pts > lo) & (pts < hi), axis=1)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.lo), np.asarray(self.hi)


Shape = Union[Ball, Box]


@dataclass(frozen=True)
class DomainSpec:
    """Reference set plus the computational bounding box Lambda."""

    shape: Shape
    bounding_lo: tuple
    bounding_hi: tuple
    tail_radius: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "bounding_lo", tuple(float(v) for v in self.bounding_lo))
        object.__setattr__(self, "bounding_hi", tuple(float(v) for v in self.bounding_hi))
        d = self.shape.dimension
        if len(self.bounding_lo) != d or len(self.bounding_hi) != d:
            raise ValidationError("bounding box dimension must match the reference set")
        slo, shi = self.shape.bounds()
        blo = np.asarray(self.bounding_lo)
        bhi = np.asarray(self.bounding_hi)
        if not (np.all(blo < slo) and np.all(bhi > shi)):
            raise ValidationError("bounding box must strictly contain the closure of the reference set")

    @property
    def dimension(self) -> int:
        return self.shape.dimension

    def margin(self) -> float:
        """Smallest gap between the reference set and the bounding box boundary."""
        slo, shi = self.shape.bounds()
        blo = np.asarray(self.bounding_lo)
        bhi = np.asarray(self.bounding_hi)
        return float(min(np.min(slo - blo), np.min(bhi - shi)))


def domain_ball(center: Sequence[float], radius: float, margin: float) -> DomainSpec:
    """Ball reference set with an axis-aligned bounding box at the given margin."""
    c = np.asarray(center, dtype=float)
    return DomainSpec(
        shape=Ball(tuple(c), float(radius)),
        bounding_lo=tuple(c - radius - margin),
        bounding_hi=tuple(c + radius + margin),
    )


def domain_box(lo: Sequence[float], hi: Sequence[float], margin: float) -> DomainSpec:
    box = Box(tuple(lo), tuple(hi))
    return DomainSpec(
        shape=box,
        bounding_lo=tuple(np.asarray(lo, float) - margin),
        bounding_hi=tuple(np.asarray(hi, float) + margin),
    )


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform Cartesian lattice covering the bounding box, with cell tags."""

    h: float
    lo: tuple
    shape: tuple
    interior: np.ndarray  # bool, grid shape; True where the center lies in Omega

    @property
    def dimension(self) -> int:
        return len(self.shape)

    @property
    def ncells(self) -> int:
        return int(np.prod(self.shape))

    @property
    def n_interior(self) -> int:
        return int(np.count_nonzero(self.interior))

    @property
    def cell_volume(self) -> float:
        return self.h**self.dimension

    def axis_centers(self, ax: int) -> np.ndarray:
        return self.lo[ax] + (np.arange(self.shape[ax]) + 0.5) * self.h

    def centers(self) -> np.ndarray:
        """Cell centers as an (ncells, d) array in flat C order."""
        axes = [self.axis_centers(ax) for ax in range(self.dimension)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def interior_indices(self) -> np.ndarray:
        """(n_interior, d) integer multi-indices of interior cells, C order."""
        return np.argwhere(self.interior)


def make_grid(dom: DomainSpec, h: float) -> Grid:
    """Build the grid; h must divide the bounding box evenly on each axis."""
    if not h > 0:
        raise ValidationError("grid spacing must be positive")
    lo = np.asarray(dom.bounding_lo)
    hi = np.asarray(dom.bounding_hi)
    lengths = hi - lo
    counts = np.round(lengths / h).astype(int)
    if np.any(counts < 1) or np.any(np.abs(counts * h - lengths) > _DIV_TOL * np.maximum(1.0, lengths)):
        raise ValidationError(f"h = {h} must divide the bounding box evenly on each axis (lengths {lengths.tolist()})")
    shape = tuple(int(c) for c in counts)
    axes = [lo[ax] + (np.arange(shape[ax]) + 0.5) * h for ax in range(len(shape))]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    interior = dom.shape.contains(pts).reshape(shape)
    if not interior.any():
        raise ValidationError("grid resolves no interior cells; refine h or grow the reference set")
    return Grid(h=float(h), lo=tuple(float(v) for v in lo), shape=shape, interior=interior)


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Per-cell values on the full lattice with a frozen exterior datum.

    Construction enforces that exterior cells equal the datum bit-exactly;
    all mutation helpers return new fields that re-impose the datum.
    """

    grid: Grid
    values: np.ndarray
    datum: np.ndarray

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=float)
        datum = np.ascontiguousarray(self.datum, dtype=float)
        if values.shape != self.grid.shape or datum.shape != self.grid.shape:
            raise ValidationError("field arrays must match the grid shape")
        ext = ~self.grid.interior
        if not np.array_equal(values[ext], datum[ext]):
            raise ValidationError("exterior cells must equal the boundary datum bit-exactly")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "datum", datum)

    @property
    def in_unit_range(self) -> bool:
        return bool(np.all(self.values >= 0.0) and np.all(self.values <= 1.0))

    @property
    def is_binary(self) -> bool:
        v = self.values
        return bool(np.all((v == 0.0) | (v == 1.0)))

    def interior_values(self) -> np.ndarray:
        return self.values[self.grid.interior]

    def replace_interior(self, interior_values: np.ndarray) -> "ScalarField":
        vals = self.datum.copy()
        vals[self.grid.interior] = interior_values
        return ScalarField(self.grid, vals, self.datum)

    def flipped(self) -> "ScalarField":
        return ScalarField(self.grid, 1.0 - self.values, 1.0 - self.datum)


def field_from_values(grid: Grid, values: np.ndarray, datum: np.ndarray) -> ScalarField:
    """Field from a full-lattice value array; exterior entries are overwritten by the datum."""
    datum = np.ascontiguousarray(datum, dtype=float)
    vals = np.ascontiguousarray(values, dtype=float).copy()
    ext = ~grid.interior
    vals[ext] = datum[ext]
    return ScalarField(grid, vals, datum)


def constant_field(grid: Grid, value: float, datum: np.ndarray) -> ScalarField:
    vals = np.full(grid.shape, float(value))
    return field_from_values(grid, vals, datum)


def indicator_halfspace(grid: Grid, normal: Sequence[float], offset: float = 0.0) -> ScalarField:
    """Indicator of {x : x . n > offset}, sampled at cell centers.

    Ties (center exactly on the hyperplane) go to 0. The field is its own
    datum, so it is admissible as a boundary condition.
    """
    n = np.asarray(normal, dtype=float)
    if n.shape != (grid.dimension,):
        raise ValidationError("normal dimension must match the grid")
    if abs(np.linalg.norm(n) - 1.0) > 1e-12:
        raise ValidationError("halfspace normal must be a unit vector (|n| = 1 within 1e-12)")
    dots = grid.centers() @ n
    vals = (dots > offset).astype(float).reshape(grid.shape)
    return ScalarField(grid, vals, vals.copy())


def superlevel(u: ScalarField, t: float) -> ScalarField:
    """0/1 field indicating {u > t} for t in (0, 1)."""
    if not (0.0 < t < 1.0):
        raise ValidationError("superlevel threshold must lie in (0, 1)")
    vals = (u.values > t).astype(float)
    datum = (u.datum > t).astype(float)
    return ScalarField(u.grid, vals, datum)


def symdiff_measure(a: ScalarField, b: ScalarField) -> float:
    """h^d times the number of cells where the binary fields differ."""
    if a.grid is not b.grid and a.grid.shape != b.grid.shape:
        raise ValidationError("fields must live on the same grid")
    if not (a.is_binary and b.is_binary):
        raise ValidationError("symmetric difference requires binary fields")
    return float(np.count_nonzero(a.values != b.values)) * a.grid.cell_volume


def random_admissible(
    grid: Grid,
    datum: np.ndarray,
    rng: np.random.Generator,
    levels: Optional[int] = None,
) -> ScalarField:
    """Random field in [0,1] on interior cells, frozen to the datum outside.

    With ``levels`` set, interior values are quantized to that many evenly
    spaced values (handy when the coarea decomposition must stay small).
    """
    vals = rng.random(grid.shape)
    if levels is not None:
        if levels < 2:
            raise ValidationError("quantization needs at least 2 levels")
        vals = np.round(vals * (levels - 1)) / (levels - 1)
    return field_from_values(grid, vals, datum)


def save_field_csv(field: ScalarField, path) -> None:
    """Write one row per cell: flat index, center coordinates, value."""
    centers = field.grid.centers()
    vals = field.values.ravel()
    d = field.grid.dimension
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index"] + [f"x{ax}" for ax in range(d)] + ["value"])
        for i in range(vals.size):
            w.writerow([i] + [f"{c:.17g}" for c in centers[i]] + [f"{vals[i]:.17g}"])


def load_field_values(grid: Grid, path) -> np.ndarray:
    """Read back a value array written by save_field_csv."""
    vals = np.empty(grid.ncells)
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header[0] != "index" or header[-1] != "value":
            raise ValidationError(f"unrecognized field CSV header in {path}")
        count = 0
        for row in r:
            vals[int(row[0])] = float(row[-1])
            count += 1
    if count != grid.ncells:
        raise ValidationError(f"field CSV {path} has {count} rows, expected {grid.ncells}")
    return vals.reshape(grid.shape)
