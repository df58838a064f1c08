"""Multi-indices over (Z>=0)^N: enumeration, factorials, monomials and the
componentwise partial order."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

# factorials above this are not exactly representable as doubles
_EXACT_FLOAT_LIMIT = 2**53


@dataclass(frozen=True)
class MultiIndex:
    entries: tuple[int, ...]

    def __post_init__(self):
        entries = tuple(int(e) for e in self.entries)
        if len(entries) < 1:
            raise ValueError("multi-index needs dimension >= 1")
        if any(e < 0 for e in entries):
            raise ValueError(f"negative entry in multi-index {entries}")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def zero(cls, dimension: int) -> "MultiIndex":
        return cls((0,) * dimension)

    @property
    def dimension(self) -> int:
        return len(self.entries)

    @property
    def order(self) -> int:
        return sum(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    def __le__(self, other: "MultiIndex") -> bool:
        return leq(self, other)

    def __sub__(self, other: "MultiIndex") -> "MultiIndex":
        _check_dims(self, other)
        return MultiIndex(tuple(a - b for a, b in zip(self.entries, other.entries)))

    def __add__(self, other: "MultiIndex") -> "MultiIndex":
        _check_dims(self, other)
        return MultiIndex(tuple(a + b for a, b in zip(self.entries, other.entries)))

    def __str__(self):
        return "(" + ",".join(str(e) for e in self.entries) + ")"


def _check_dims(a: MultiIndex, b: MultiIndex) -> None:
    if a.dimension != b.dimension:
        raise ValueError(f"dimension mismatch: {a} vs {b}")


def bracket(k: float) -> int:
    """The integer [k] with k - 1 < [k] <= k."""
    if k < 0:
        raise ValueError("k must be non-negative")
    return int(math.floor(k))


def enumerate_indices(dimension: int, k: float) -> list[MultiIndex]:
    """All multi-indices of length `dimension` with order <= [k].

    Ordered by ascending order, then lexicographically descending in the
    first entry, so that (1,0) precedes (0,1).
    """
    if dimension < 1:
        raise ValueError("dimension must be >= 1")
    top = bracket(k)
    out = []
    for order in range(top + 1):
        level = [
            c for c in itertools.product(range(order, -1, -1), repeat=dimension)
            if sum(c) == order
        ]
        out.extend(MultiIndex(c) for c in level)
    return out


def leq(a: MultiIndex, b: MultiIndex) -> bool:
    _check_dims(a, b)
    return all(x <= y for x, y in zip(a.entries, b.entries))


def factorial(a: MultiIndex) -> int:
    value = 1
    for e in a.entries:
        value *= math.factorial(e)
    if value > _EXACT_FLOAT_LIMIT:
        raise OverflowError(f"factorial of {a} exceeds exact float range")
    return value


def monomial(a: MultiIndex, x: Sequence[float] | np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != (a.dimension,):
        raise ValueError(f"point of shape {x.shape} for index of dimension {a.dimension}")
    # python's 0.0 ** 0 == 1.0, which is the convention we want
    return float(math.prod(float(xi) ** e for xi, e in zip(x, a.entries)))


def monomial_values(a: MultiIndex, coords: Sequence[np.ndarray]) -> np.ndarray:
    """x^a evaluated on coordinate arrays (one array per axis)."""
    if len(coords) != a.dimension:
        raise ValueError("coordinate arrays do not match index dimension")
    out = np.ones_like(coords[0], dtype=float)
    for c, e in zip(coords, a.entries):
        if e:
            out = out * c**e
    return out
