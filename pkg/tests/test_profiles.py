import numpy as np
import pytest

from diffasym.grid import Grid, monomial_moment
from diffasym.kernel import KernelSpec, heat_kernel_closed_form
from diffasym.multiindex import MultiIndex, enumerate_indices
from diffasym.profiles import (
    bump,
    combine,
    gaussian,
    hermite_moment_free,
    kernel_snapshot,
    power_tail_moment_free,
)

GRID = Grid(1, 60.0, 2048)


def test_gaussian_and_kernel_snapshot():
    g = gaussian(GRID, center=1.0, width=2.0, amplitude=3.0)
    np.testing.assert_allclose(g.values, 3 * np.exp(-(GRID.axis - 1) ** 2 / 4))
    k = kernel_snapshot(GRID, KernelSpec.heat(1), 2.0)
    np.testing.assert_allclose(k.values, heat_kernel_closed_form(GRID, 2.0).values, atol=1e-14)
    assert k.time == 0.0


def test_bump_support():
    b = bump(GRID, center=2.0, radius=1.5)
    outside = np.abs(GRID.axis - 2.0) >= 1.5
    assert np.all(b.values[outside] == 0)
    assert b.values.max() == pytest.approx(1.0, abs=1e-3)


@pytest.mark.parametrize("k", [0, 1, 2, 3])
def test_hermite_moments_vanish(k):
    f = hermite_moment_free(GRID, k)
    for a in enumerate_indices(1, k):
        assert abs(monomial_moment(f, a)) < 1e-10
    assert abs(monomial_moment(f, MultiIndex((k + 1,)))) > 1e-3


def test_hermite_matches_derivative():
    # d/dx exp(-x^2) = -2x exp(-x^2)
    np.testing.assert_allclose(hermite_moment_free(GRID, 0).values,
                               -2 * GRID.axis * np.exp(-GRID.axis**2), atol=1e-14)


def test_hermite_2d():
    grid = Grid(2, 16.0, 128)
    f = hermite_moment_free(grid, 1)
    for a in enumerate_indices(2, 1):
        assert abs(monomial_moment(f, a)) < 1e-10


@pytest.mark.parametrize("k", [0, 1, 2])
def test_power_tail_moments_vanish(k):
    grid = Grid(1, 4096.0, 16384)
    f = power_tail_moment_free(grid, k, eps=0.05)
    w = 1 + grid.radius**k
    scale = float(np.sum(np.abs(f.values) * w) * grid.cell_volume)
    for a in enumerate_indices(1, k):
        assert abs(monomial_moment(f, a, tail_tol=None)) < 1e-10 * scale
    # tail keeps its power law far out
    far = grid.axis > 100
    tail = f.values[far] * (1 + grid.axis[far] ** 2) ** ((1 + k + 0.05) / 2)
    np.testing.assert_allclose(tail, 1.0, rtol=1e-10)


def test_profile_errors():
    with pytest.raises(ValueError):
        hermite_moment_free(GRID, -1)


def test_combine():
    a, b = gaussian(GRID), hermite_moment_free(GRID, 0)
    np.testing.assert_array_equal(combine(a, b).values, (a + b).values)
