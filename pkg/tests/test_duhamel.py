import json
import math

import numpy as np
import pytest

from diffasym.duhamel import (
    BlowUpError,
    NonlinearitySpec,
    SourceHistory,
    StepControls,
    duhamel_accumulate,
    duhamel_history,
    remainder_RK,
    remainder_RK_identity,
    solution_bound_band,
    solve,
    time_grid,
)
from diffasym.grid import Grid, lq_norm
from diffasym.kernel import KernelSpec, g_alpha_field
from diffasym.moments import CacheBank, compute_moments, project
from diffasym.multiindex import MultiIndex
from diffasym.semigroup import SemigroupOperator

GRID = Grid(1, 60.0, 2048)
HEAT = KernelSpec.heat(1)
OP = SemigroupOperator(HEAT, GRID)
PHI = GRID.sample(lambda x: 0.5 * np.exp(-x**2))


def test_nonlinearity_forms():
    u = GRID.sample(lambda x: np.sin(x))
    signed = NonlinearitySpec(p=3, coefficient=-2.0, growth=0.5)(1.0, u)
    np.testing.assert_allclose(signed.values, -2 * 2**0.5 * np.abs(u.values) ** 2 * u.values)
    absolute = NonlinearitySpec(p=2, coefficient=1.0, form="absolute")(0.0, u)
    np.testing.assert_allclose(absolute.values, u.values**2)
    assert np.all(NonlinearitySpec(p=4)(0.0, GRID.zeros()).values == 0)
    assert NonlinearitySpec(p=4).decay_margin(1, 2.0) == 0.5
    assert NonlinearitySpec(p=4, growth=0.25).decay_margin(1, 2.0) == 0.25
    with pytest.raises(ValueError):
        NonlinearitySpec(p=0.5)
    with pytest.raises(ValueError):
        NonlinearitySpec(p=2, form="cubic")


def test_spatial_profiles():
    F = NonlinearitySpec(p=1, coefficient=1.0, profile=("gaussian", 2.0))
    np.testing.assert_allclose(F(0.0, GRID.sample(np.ones_like)).values, np.exp(-GRID.axis**2 / 4))
    F = NonlinearitySpec(p=1, coefficient=1.0, profile=("tanh", 0.5, 1.0))
    assert F.spatial_factor(GRID)[-1] == pytest.approx(1.5, abs=1e-12)


def test_controls_validation():
    with pytest.raises(ValueError):
        StepControls(scheme="rk4")
    with pytest.raises(ValueError):
        StepControls(growth=1.3)
    with pytest.raises(ValueError):
        StepControls(dt=0.0)


def test_time_grid_shape():
    t = time_grid(10.0, 0.25, 1.2, extra=(2.5,))
    assert t[0] == 0 and t[-1] == 10.0 and 2.5 in t
    assert np.all(np.diff(t) > 0)
    np.testing.assert_allclose(t[:4], [0, 0.25, 0.5, 0.75])
    late = t[t >= 1]
    assert np.all(late[1:-1] / late[:-2] <= 1.2 + 1e-12)


def test_zero_nonlinearity_is_linear_flow():
    traj = solve(OP, PHI, NonlinearitySpec.zero(), 20.0, StepControls(dt=0.1))
    for t, u in zip(traj.times, traj.fields):
        assert lq_norm(u - OP.apply(PHI, t).at_time(t), math.inf) < 1e-10


@pytest.mark.parametrize("scheme, order", [("exp-euler", 1), ("exp-trapezoid", 2)])
def test_linear_probe_order(scheme, order):
    lam = -0.7
    F = NonlinearitySpec(p=1, coefficient=lam)
    exact = OP.apply(PHI, 1.0) * math.exp(lam)
    errs = []
    dts = [0.1, 0.05, 0.025, 0.0125]
    for dt in dts:
        times = np.linspace(0, 1, round(1 / dt) + 1)
        u = solve(OP, PHI, F, 1.0, StepControls(scheme=scheme, dt=dt), times=times).fields[-1]
        errs.append(lq_norm(u - exact, 1))
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert slope == pytest.approx(order, abs=0.2)


def test_mass_decreases_with_absorption():
    traj = solve(OP, PHI, NonlinearitySpec(p=4), 30.0, StepControls())
    masses = np.array([lq_norm(u, 1) for u in traj.fields])
    assert np.all(np.diff(masses) <= 1e-15)
    assert abs(traj.mass_ledger()) < 1e-10


def test_fine_step_reference():
    # coarse and fine runs agree at the trapezoid rate
    F = NonlinearitySpec(p=4)
    runs = [solve(OP, PHI, F, 1.0, StepControls(dt=dt)).fields[-1] for dt in (0.1, 0.05, 0.025)]
    ratio = lq_norm(runs[0] - runs[1], 1) / lq_norm(runs[1] - runs[2], 1)
    assert ratio == pytest.approx(4.0, rel=0.15)
    assert lq_norm(runs[1] - runs[2], 1) < 1e-3 * lq_norm(runs[2], 1)


def test_blowup_guard():
    grid = Grid(1, 60.0, 512)
    op = SemigroupOperator(HEAT, grid)
    phi = grid.sample(lambda x: 2.0 * np.exp(-x**2))
    with pytest.raises(BlowUpError):
        solve(op, phi, NonlinearitySpec(p=3, coefficient=1.0), 20.0, StepControls(dt=0.1))


def test_solution_band():
    traj = solve(SemigroupOperator(HEAT, Grid(1, 400.0, 8192)),
                 Grid(1, 400.0, 8192).sample(lambda x: 0.5 * np.exp(-x**2)),
                 NonlinearitySpec(p=4), 500.0, StepControls())
    assert solution_bound_band(traj, 2.0) < 4.0


def test_accumulate_zero_and_small_time():
    times = np.linspace(0, 0.02, 5)
    zero = SourceHistory.from_function(times, lambda s: GRID.zeros(s), "exp-trapezoid")
    assert lq_norm(duhamel_accumulate(OP, zero), math.inf) == 0.0
    h = GRID.sample(lambda x: np.exp(-x**2 / 4))
    const = SourceHistory.from_function(times, lambda s: h, "exp-trapezoid")
    out = duhamel_accumulate(OP, const)
    # int_0^t e^{sL} h ds = t h + O(t^2)
    assert lq_norm(out - 0.02 * h, math.inf) < 0.02**2 * lq_norm(h, math.inf)


def test_accumulate_richardson():
    h = GRID.sample(lambda x: np.exp(-x**2) * np.cos(x))

    def run(n):
        times = np.linspace(0, 2, n + 1)
        src = SourceHistory.from_function(times, lambda s: h * math.exp(-s), "exp-trapezoid")
        return duhamel_accumulate(OP, src)

    a, b, c = run(10), run(20), run(40)
    ratio = lq_norm(a - b, 1) / lq_norm(b - c, 1)
    assert ratio == pytest.approx(4.0, rel=0.1)
    with pytest.raises(ValueError):
        duhamel_accumulate(OP, SourceHistory([], "exp-euler"))


BANK = CacheBank(HEAT, GRID, 2)
TIMES = np.concatenate([np.linspace(0, 1, 11), np.geomspace(1.2, 8, 10)])


def test_remainder_of_basis_is_zero():
    src = SourceHistory.from_function(
        TIMES, lambda s: g_alpha_field(HEAT, GRID, MultiIndex((1,)), s), "exp-trapezoid")
    for r in remainder_RK(OP, src, BANK):
        assert lq_norm(r, math.inf) < 1e-6


def test_remainder_of_moment_free_source():
    base = GRID.sample(lambda x: (1 + x**3) * np.exp(-x**2))

    def source(s):
        h = OP.apply(base, s) if s > 0 else base
        cache = BANK.at(s)
        return project(h, compute_moments(h, cache), cache)

    src = SourceHistory.from_function(TIMES, source, "exp-trapezoid")
    plain = duhamel_history(OP, src)
    for a, b in zip(remainder_RK(OP, src, BANK), plain):
        assert lq_norm(a - b, 1) < 1e-8


def test_remainder_two_paths_agree():
    src = SourceHistory.from_function(
        TIMES, lambda s: GRID.sample(lambda x: (1 + x + x**2 / 2) * np.exp(-(x - 0.3) ** 2)) * (1 + s) ** -2,
        "exp-trapezoid")
    for a, b in zip(remainder_RK(OP, src, BANK), remainder_RK_identity(OP, src, BANK)):
        assert lq_norm(a - b, 1) < 1e-8


def test_trajectory_lookup_and_export(tmp_path):
    traj = solve(OP, PHI, NonlinearitySpec(p=4), 4.0, StepControls(dt=0.25), snapshots=(2.0, 3.3))
    assert traj.at(3.3).time == pytest.approx(3.3)
    with pytest.raises(KeyError):
        traj.at(3.31)
    written = traj.export(tmp_path)
    index = json.loads((tmp_path / "fields_u_index.json").read_text())
    assert index["times"] == [2.0, 3.3] and index["scheme"] == "exp-trapezoid"
    assert len(written) == 3
