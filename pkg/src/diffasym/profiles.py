"""Initial data builders."""

from __future__ import annotations

import numpy as np
from numpy.polynomial import hermite

from .grid import Field, Grid
from .kernel import KernelSpec, kernel_field
from .multiindex import enumerate_indices, monomial_values


def gaussian(grid: Grid, center=0.0, width: float = 1.0, amplitude: float = 1.0) -> Field:
    """amplitude * exp(-|x - center|^2 / width^2)."""
    c = np.broadcast_to(np.asarray(center, dtype=float), (grid.dimension,))
    r2 = sum((x - ci) ** 2 for x, ci in zip(grid.coords, c))
    return Field(grid, amplitude * np.exp(-r2 / width**2), 0.0)


def kernel_snapshot(grid: Grid, spec: KernelSpec, t0: float = 1.0, amplitude: float = 1.0) -> Field:
    """amplitude * G(., t0), i.e. g_0(., t0 - 1)."""
    return (amplitude * kernel_field(spec, grid, t0)).at_time(0.0)


def bump(grid: Grid, center=0.0, radius: float = 1.0, amplitude: float = 1.0) -> Field:
    """Compactly supported smooth bump exp(1 - 1/(1 - r^2)) on |x - c| < radius."""
    c = np.broadcast_to(np.asarray(center, dtype=float), (grid.dimension,))
    r2 = sum((x - ci) ** 2 for x, ci in zip(grid.coords, c)) / radius**2
    inside = r2 < 1.0
    values = np.zeros(grid.shape)
    values[inside] = np.exp(1.0 - 1.0 / (1.0 - r2[inside]))
    return Field(grid, amplitude * values, 0.0)


def hermite_moment_free(grid: Grid, k: int, width: float = 1.0, amplitude: float = 1.0) -> Field:
    """amplitude * d^{k+1}/dx_1^{k+1} exp(-|x|^2/width^2).

    All moments of order <= k vanish; the decay of e^{tL} of it is
    t^{-(k+1)/d}, one order faster than the generic bound.
    """
    if k < 0:
        raise ValueError("k must be non-negative")
    n = k + 1
    s = grid.coords[0] / width
    coef = np.zeros(n + 1)
    coef[n] = 1.0
    values = (-1.0 / width) ** n * hermite.hermval(s, coef) * np.exp(-grid.radius**2 / width**2)
    return Field(grid, amplitude * values, 0.0)


def power_tail_moment_free(grid: Grid, k: int, eps: float = 0.05, amplitude: float = 1.0,
                           core_width: float = 2.0) -> Field:
    """A profile in L^1_k, but in no L^1_{k+delta} with delta >= eps, whose
    moments of order <= k vanish on the grid.

    The tail is (1 + |x|^2)^{-(N+k+eps)/2}; moments are removed with a
    combination of x^beta exp(-|x|^2/core_width^2), |beta| <= k, solved from
    the discrete moment equations. For such data the bound t^{-k/d} on the
    L^1 norm of e^{tL} phi is attained up to t^{-eps/d}.
    """
    if k < 0 or eps <= 0:
        raise ValueError("need k >= 0 and eps > 0")
    N = grid.dimension
    tail = (1.0 + grid.radius**2) ** (-(N + k + eps) / 2.0)
    core = np.exp(-grid.radius**2 / core_width**2)
    indices = enumerate_indices(N, k)
    cv = grid.cell_volume
    basis = [monomial_values(b, grid.coords) * core for b in indices]
    mono = [monomial_values(a, grid.coords) for a in indices]
    matrix = np.array([[np.sum(m * b) * cv for b in basis] for m in mono])
    rhs = np.array([np.sum(m * tail) * cv for m in mono])
    weights = np.linalg.solve(matrix, rhs)
    values = tail - sum(w * b for w, b in zip(weights, basis))
    return Field(grid, amplitude * values, 0.0)


def combine(*fields: Field) -> Field:
    """Sum of several initial profiles on one grid."""
    if not fields:
        raise ValueError("nothing to combine")
    total = fields[0]
    for f in fields[1:]:
        total = total + f
    return total.at_time(0.0)
