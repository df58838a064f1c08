"""The convolution semigroup exp(tL) realised as a Fourier multiplier, with
a brute-force quadrature path kept as an oracle."""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from .grid import Field, Grid, GridError, lq_norm
from .kernel import (
    DerivativeOrderError,
    KernelSpec,
    TruncationError,
    fourier_monomial,
    kernel_field,
)
from .multiindex import MultiIndex


class SemigroupOperator:
    """exp(tL) for one kernel on one grid.

    Multipliers exp(-t psi) are cached per exact bit pattern of t.
    """

    def __init__(self, spec: KernelSpec, grid: Grid, truncation_factor: float = 8.0):
        if spec.dimension != grid.dimension:
            raise GridError("kernel and grid dimensions differ")
        self.spec = spec
        self.grid = grid
        self.truncation_factor = truncation_factor
        self.symbol = spec.symbol(grid)
        self._cache: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    def multiplier(self, t: float) -> np.ndarray:
        key = float(t).hex()
        table = self._cache.get(key)
        if table is None:
            table = np.exp(-float(t) * self.symbol)
            table.setflags(write=False)
            with self._lock:
                table = self._cache.setdefault(key, table)
        return table

    def check_spread(self, t: float) -> None:
        if self.truncation_factor and t > 0:
            width = self.spec.scale(t)
            if self.truncation_factor * width > self.grid.half_extent:
                raise TruncationError(
                    f"t={t:g}: spread {width:.3g} too wide for R={self.grid.half_extent:g}")

    def _check(self, phi: Field) -> None:
        if phi.grid != self.grid:
            raise GridError("field is not on the operator's grid")

    def apply(self, phi: Field, t: float, method: str = "spectral") -> Field:
        self._check(phi)
        if t < 0:
            raise ValueError("t must be non-negative")
        if t == 0:
            return phi
        self.check_spread(t)
        if method == "direct":
            return self.apply_direct(phi, t)
        values = np.real(np.fft.ifftn(np.fft.fftn(phi.values) * self.multiplier(t)))
        return Field(self.grid, values, phi.time + t)

    def apply_derivative(self, phi: Field, t: float, a: MultiIndex) -> Field:
        self._check(phi)
        if t <= 0:
            raise ValueError("t must be positive")
        if a.order > self.spec.smoothness:
            raise DerivativeOrderError(f"|{a}| exceeds smoothness {self.spec.smoothness}")
        if a.order == 0:
            return self.apply(phi, t)
        self.check_spread(t)
        mult = fourier_monomial(self.grid, a) * self.multiplier(t)
        values = np.real(np.fft.ifftn(np.fft.fftn(phi.values) * mult))
        return Field(self.grid, values, phi.time + t)

    def apply_direct(self, phi: Field, t: float) -> Field:
        """O(n^2) quadrature of G(x - y, t) phi(y) dy on the periodic grid (1D)."""
        grid = self.grid
        if grid.dimension != 1:
            raise ValueError("direct convolution is implemented for dimension 1 only")
        kern = kernel_field(self.spec, grid, t, resolution_factor=0,
                            truncation_factor=0).values
        n = grid.points_per_axis
        i = np.arange(n)
        # node offset: x_i - y_j sits at index i - j + n/2
        index = (i[:, None] - i[None, :] + n // 2) % n
        values = kern[index] @ phi.values * grid.spacing
        return Field(grid, values, phi.time + t)


def spectral_derivative(phi: Field, a: MultiIndex) -> Field:
    values = np.real(np.fft.ifftn(np.fft.fftn(phi.values) * fourier_monomial(phi.grid, a)))
    return phi.with_values(values)


@dataclass
class SmoothingFit:
    slope: float
    expected: float
    times: np.ndarray
    norms: np.ndarray


def gradient_norm(f: Field, q: float, order: int, op: SemigroupOperator | None = None) -> float:
    """||grad^j f||_q using the Euclidean norm of all order-j partials."""
    if order == 0:
        return lq_norm(f, q)
    from .multiindex import enumerate_indices

    parts = [spectral_derivative(f, a).values
             for a in enumerate_indices(f.grid.dimension, order) if a.order == order]
    return lq_norm(f.with_values(np.sqrt(sum(p**2 for p in parts))), q)


def verify_smoothing(op: SemigroupOperator, phi: Field, q: float, r: float,
                     times, order: int = 0) -> SmoothingFit:
    """Fit the log-log slope of ||grad^j exp(tL) phi||_q over `times`.

    The expected slope is -(N/d)(1/r - 1/q) - j/d.
    """
    times = np.asarray(times, dtype=float)
    if len(times) < 4:
        raise ValueError("need at least 4 times")
    if r > q:
        raise ValueError("need r <= q")
    n, d = op.spec.dimension, op.spec.scaling_exponent
    norms = np.array([gradient_norm(op.apply(phi, t), q, order) for t in times])
    slope = float(np.polyfit(np.log(times), np.log(norms), 1)[0])
    inv_q = 0.0 if np.isinf(q) else 1.0 / q
    expected = -(n / d) * (1.0 / r - inv_q) - order / d
    return SmoothingFit(slope, expected, times, norms)
