"""Uniform periodic grids on [-R, R)^N, sampled fields and the quadratures
built on them (L^q norms, weighted L^1 norms, monomial moments)."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .multiindex import MultiIndex, monomial_values

MAX_MOMENT_ORDER = 8
TAIL_TOLERANCE = 1e-10


class GridError(ValueError):
    """Grid/field mismatch or an invalid grid description."""


class NonFiniteFieldError(ValueError):
    pass


class TailDominanceError(RuntimeError):
    """Field mass near the domain boundary makes a moment unreliable."""


@dataclass(frozen=True)
class Grid:
    dimension: int
    half_extent: float
    points_per_axis: int

    def __post_init__(self):
        n = self.points_per_axis
        if self.dimension not in (1, 2):
            raise GridError("only dimensions 1 and 2 are supported")
        if self.half_extent <= 0:
            raise GridError("half_extent must be positive")
        if n < 8 or n & (n - 1):
            raise GridError(f"points_per_axis must be a power of two >= 8, got {n}")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_extent / self.points_per_axis

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dimension

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_axis,) * self.dimension

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.half_extent + self.spacing * np.arange(self.points_per_axis)

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        if self.dimension == 1:
            return (self.axis,)
        return tuple(np.meshgrid(*([self.axis] * self.dimension), indexing="ij"))

    @cached_property
    def radius(self) -> np.ndarray:
        return np.sqrt(sum(c**2 for c in self.coords))

    @cached_property
    def frequency_axis(self) -> np.ndarray:
        # continuous frequencies pi*k/R in the standard FFT layout
        return 2.0 * np.pi * np.fft.fftfreq(self.points_per_axis, d=self.spacing)

    @cached_property
    def frequencies(self) -> tuple[np.ndarray, ...]:
        if self.dimension == 1:
            return (self.frequency_axis,)
        return tuple(np.meshgrid(*([self.frequency_axis] * self.dimension), indexing="ij"))

    @cached_property
    def boundary_ring(self) -> np.ndarray:
        """Mask of nodes within two cells of the boundary along some axis."""
        idx = np.arange(self.points_per_axis)
        edge = (idx < 2) | (idx >= self.points_per_axis - 1)
        if self.dimension == 1:
            return edge
        return edge[:, None] | edge[None, :]

    def refined(self, factor: int = 2) -> "Grid":
        return Grid(self.dimension, self.half_extent, self.points_per_axis * factor)

    def widened(self, factor: int = 2) -> "Grid":
        """Same spacing, `factor` times the extent."""
        return Grid(self.dimension, self.half_extent * factor, self.points_per_axis * factor)

    def sample(self, fn, time: float = 0.0) -> "Field":
        return Field(self, fn(*self.coords), time)

    def zeros(self, time: float = 0.0) -> "Field":
        return Field(self, np.zeros(self.shape), time)


@dataclass(frozen=True, eq=False)
class Field:
    grid: Grid
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise GridError(f"values of shape {values.shape} on grid of shape {self.grid.shape}")
        if not np.all(np.isfinite(values)):
            raise NonFiniteFieldError("field contains NaN or Inf")
        if self.time < 0:
            raise ValueError("field time must be non-negative")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "time", float(self.time))

    def with_values(self, values, time: float | None = None) -> "Field":
        return Field(self.grid, values, self.time if time is None else time)

    def at_time(self, time: float) -> "Field":
        return Field(self.grid, self.values, time)

    def _other(self, other) -> np.ndarray:
        if isinstance(other, Field):
            if other.grid != self.grid:
                raise GridError("fields live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return self.with_values(self.values + self._other(other))

    def __sub__(self, other):
        return self.with_values(self.values - self._other(other))

    def __mul__(self, scalar: float):
        return self.with_values(self.values * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_values(-self.values)

    def integral(self) -> float:
        return float(np.sum(self.values) * self.grid.cell_volume)


def check_same_grid(*fields: Field) -> Grid:
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise GridError("fields live on different grids")
    return grid


def lq_norm(f: Field, q: float) -> float:
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    a = np.abs(f.values)
    if math.isinf(q):
        return float(a.max())
    if q == 1:
        return float(np.sum(a) * f.grid.cell_volume)
    return float((np.sum(a**q) * f.grid.cell_volume) ** (1.0 / q))


def weighted_l1_norm(f: Field, ell: float) -> float:
    """Quadrature of |f|(1 + |x|^ell)."""
    if ell < 0:
        raise ValueError("ell must be non-negative")
    weight = 1.0 + f.grid.radius**ell
    return float(np.sum(np.abs(f.values) * weight) * f.grid.cell_volume)


def monomial_moment(
    f: Field,
    a: MultiIndex,
    max_order: int = MAX_MOMENT_ORDER,
    tail_tol: float = TAIL_TOLERANCE,
) -> float:
    """Quadrature of x^a f, guarded against domain truncation.

    The guard compares |x|^|a| |f| on the boundary ring against the absolute
    moment of the same order; order zero is exempt since mass is exact on
    the periodic grid.
    """
    if a.dimension != f.grid.dimension:
        raise GridError("multi-index dimension differs from grid dimension")
    if a.order > max_order:
        raise ValueError(f"moment order {a.order} exceeds configured maximum {max_order}")
    weight = monomial_values(a, f.grid.coords)
    moment = float(np.sum(weight * f.values) * f.grid.cell_volume)
    if a.order > 0 and tail_tol is not None:
        density = f.grid.radius ** a.order * np.abs(f.values)
        scale = float(np.sum(density) * f.grid.cell_volume)
        tail = float(density[f.grid.boundary_ring].max())
        if tail > tail_tol * max(scale, abs(moment)):
            raise TailDominanceError(
                f"moment {a}: boundary density {tail:.3e} vs moment scale {scale:.3e}; "
                "enlarge the domain"
            )
    return moment


def export_field_csv(f: Field, path: str | Path) -> None:
    """Columns x_1[,x_2],value in full double precision."""
    path = Path(path)
    header = [f"x_{i + 1}" for i in range(f.grid.dimension)] + ["value"]
    cols = [c.ravel() for c in f.grid.coords] + [f.values.ravel()]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in zip(*cols):
            w.writerow([repr(float(v)) for v in row])


def absolute_moment(f: Field, ell: float) -> float:
    """Quadrature of |x|^ell |f|."""
    if ell < 0:
        raise ValueError("ell must be non-negative")
    return float(np.sum(f.grid.radius**ell * np.abs(f.values)) * f.grid.cell_volume)
