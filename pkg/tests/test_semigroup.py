import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from diffasym.grid import Grid, GridError, lq_norm
from diffasym.kernel import (
    DerivativeOrderError,
    KernelSpec,
    TruncationError,
    heat_kernel_closed_form,
)
from diffasym.multiindex import MultiIndex
from diffasym.semigroup import (
    SemigroupOperator,
    gradient_norm,
    spectral_derivative,
    verify_smoothing,
)


def test_zero_time_is_identity(heat_op, heat_grid):
    phi = heat_grid.sample(lambda x: np.exp(-x**2))
    assert heat_op.apply(phi, 0.0) is phi
    assert np.all(heat_op.multiplier(0.0) == 1.0)


def test_gaussian_propagation(heat_op, heat_grid):
    out = heat_op.apply(heat_kernel_closed_form(heat_grid, 1.0).at_time(0.0), 1.0)
    assert lq_norm(out - heat_kernel_closed_form(heat_grid, 2.0), math.inf) < 1e-8
    assert out.time == 1.0


@pytest.mark.parametrize("t", [0.3, 2.0, 20.0])
def test_gaussian_data_closed_form(heat_op, heat_grid, t):
    # e^{t Laplacian} e^{-x^2} = (1 + 4t)^{-1/2} exp(-x^2 / (1 + 4t))
    phi = heat_grid.sample(lambda x: np.exp(-x**2))
    exact = heat_grid.sample(lambda x: (1 + 4 * t) ** -0.5 * np.exp(-x**2 / (1 + 4 * t)))
    assert lq_norm(heat_op.apply(phi, t) - exact, math.inf) < 1e-12


@pytest.mark.parametrize("t", [0.1, 1.0, 30.0])
def test_mass_conserved(heat_op, heat_grid, t):
    phi = heat_grid.sample(lambda x: np.exp(-(x - 3) ** 2) * (1 + np.sin(x)))
    assert heat_op.apply(phi, t).integral() == pytest.approx(phi.integral(), abs=1e-10)


def test_semigroup_law(heat_op, heat_grid):
    phi = heat_grid.sample(lambda x: np.exp(-x**2) * np.cos(3 * x))
    a = heat_op.apply(heat_op.apply(phi, 1.3), 2.1)
    b = heat_op.apply(phi, 3.4)
    assert lq_norm(a - b, 1) <= 1e-10 * lq_norm(phi, 1)


def test_cache_bit_exact(heat_grid):
    op = SemigroupOperator(KernelSpec.heat(1), heat_grid)
    first = op.multiplier(0.7).copy()
    np.testing.assert_array_equal(op.multiplier(0.7), first)
    assert not op.multiplier(0.7).flags.writeable


def test_grid_mismatch(heat_op):
    with pytest.raises(GridError):
        heat_op.apply(Grid(1, 10.0, 64).zeros(), 1.0)


def test_spread_guard(heat_op, heat_grid):
    with pytest.raises(TruncationError):
        heat_op.apply(heat_grid.zeros(), 100.0)


def test_direct_matches_spectral():
    grid = Grid(1, 30.0, 512)
    op = SemigroupOperator(KernelSpec.heat(1), grid)
    phi = grid.sample(lambda x: np.exp(-x**2 / 2) * (1 + x))
    diff = op.apply(phi, 2.0, method="direct") - op.apply(phi, 2.0)
    assert lq_norm(diff, math.inf) < 1e-12


def test_derivative_order_zero(heat_op, heat_grid):
    phi = heat_grid.sample(lambda x: np.exp(-x**2))
    a = heat_op.apply_derivative(phi, 1.0, MultiIndex((0,)))
    np.testing.assert_array_equal(a.values, heat_op.apply(phi, 1.0).values)


def test_derivative_of_kernel(heat_op, heat_grid):
    t0, t = 0.5, 1.5
    x = heat_grid.axis
    out = heat_op.apply_derivative(heat_kernel_closed_form(heat_grid, t0), t, MultiIndex((1,)))
    exact = -x / (2 * (t0 + t)) * heat_kernel_closed_form(heat_grid, t0 + t).values
    assert np.max(np.abs(out.values - exact)) < 1e-10


def test_derivative_commutes(heat_op, heat_grid):
    phi = heat_grid.sample(lambda x: np.exp(-x**2) * np.sin(x))
    a = heat_op.apply_derivative(phi, 1.0, MultiIndex((2,)))
    b = heat_op.apply(spectral_derivative(phi, MultiIndex((2,))), 1.0)
    assert lq_norm(a - b, 1) < 1e-10


def test_derivative_order_cap():
    grid = Grid(1, 256.0, 4096)
    op = SemigroupOperator(KernelSpec.fractional(1, 1.0), grid)
    with pytest.raises(DerivativeOrderError):
        op.apply_derivative(grid.zeros(), 1.0, MultiIndex((2,)))


def test_gradient_smoothing_bounded(wide_heat_grid):
    op = SemigroupOperator(KernelSpec.heat(1), wide_heat_grid)
    phi = wide_heat_grid.sample(lambda x: np.exp(-x**2) * (1 + x))
    scaled = [gradient_norm(op.apply(phi, t), 1, 1) * t**0.5 for t in np.geomspace(1, 100, 9)]
    assert max(scaled) / min(scaled) < 3.0


def test_smoothing_heat_sup(wide_heat_grid):
    op = SemigroupOperator(KernelSpec.heat(1), wide_heat_grid)
    phi = heat_kernel_closed_form(wide_heat_grid, 1.0).at_time(0.0)
    fit = verify_smoothing(op, phi, math.inf, 1, np.geomspace(10, 1000, 12))
    assert fit.expected == -0.5
    assert fit.slope == pytest.approx(-0.5, abs=0.05)


def test_smoothing_contraction(heat_op, heat_grid):
    phi = heat_grid.sample(lambda x: np.exp(-x**2) * np.cos(2 * x))
    fit = verify_smoothing(heat_op, phi, 1, 1, [0.5, 1, 2, 4, 8])
    assert fit.expected == 0.0
    assert np.all(fit.norms <= lq_norm(phi, 1) + 1e-12)


def test_smoothing_poisson_sup():
    grid = Grid(1, 16384.0, 2**17)
    op = SemigroupOperator(KernelSpec.fractional(1, 1.0), grid)
    phi = grid.sample(lambda x: np.exp(-x**2))
    fit = verify_smoothing(op, phi, math.inf, 1, np.geomspace(10, 1000, 12))
    assert fit.slope == pytest.approx(-1.0, abs=0.05)


def test_smoothing_input_checks(heat_op, heat_grid):
    with pytest.raises(ValueError):
        verify_smoothing(heat_op, heat_grid.zeros(), 2, 1, [1, 2, 3])
    with pytest.raises(ValueError):
        verify_smoothing(heat_op, heat_grid.zeros(), 1, 2, [1, 2, 3, 4])


@settings(max_examples=30, deadline=None)
@given(st.floats(-5, 5), st.floats(0.01, 10))
def test_linearity(c, t):
    grid = Grid(1, 60.0, 2048)
    op = SemigroupOperator(KernelSpec.heat(1), grid)
    f = grid.sample(lambda x: np.exp(-x**2))
    g = grid.sample(lambda x: np.exp(-(x - 1) ** 2) * x)
    lhs = op.apply(f + c * g, t)
    rhs = op.apply(f, t) + c * op.apply(g, t)
    assert lq_norm(lhs - rhs, math.inf) < 1e-12 * (1 + abs(c))
