import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from diffasym.duhamel import NonlinearitySpec, StepControls, solve
from diffasym.grid import Grid, lq_norm
from diffasym.kernel import KernelSpec, g_alpha_field
from diffasym.moments import CacheBank, compute_moments, expansion_field
from diffasym.multiindex import MultiIndex
from diffasym.semigroup import SemigroupOperator
from diffasym.expansion import (
    RATE_CASES,
    coefficients,
    moment_free_decay,
    predict_rate,
    profile_tilde_u,
    profile_U0,
    profile_Un,
    profile_Un_identity,
    theorem11_remainder,
)

GRID = Grid(1, 60.0, 2048)
HEAT = KernelSpec.heat(1)
OP = SemigroupOperator(HEAT, GRID)
P4 = NonlinearitySpec(p=4)
A_P = P4.decay_margin(1, 2.0)
CONTROLS = StepControls(dt=0.05, growth=1.2)
M = lambda *e: MultiIndex(e)  # noqa: E731


def run(phi, F, K, t_end=30.0):
    bank = CacheBank(HEAT, GRID, K)
    traj = solve(OP, phi, F, t_end, CONTROLS)
    state = coefficients(traj, phi, K, bank, F.decay_margin(1, 2.0), 2.0)
    return traj, bank, state


@pytest.fixture(scope="module")
def nonlinear():
    phi = GRID.sample(lambda x: np.exp(-(x - 0.4) ** 2) * (1 + 0.3 * x))
    return (phi,) + run(phi, P4, 0.5)


@pytest.fixture(scope="module")
def nonlinear_K2():
    phi = GRID.sample(lambda x: np.exp(-(x - 0.4) ** 2) * (1 + 0.3 * x))
    return (phi,) + run(phi, P4, 2, t_end=15.0)


def test_zero_source_constant_coefficients():
    phi = GRID.sample(lambda x: np.exp(-x**2) * (1 + x))
    traj, bank, state = run(phi, NonlinearitySpec.zero(), 2)
    base = compute_moments(phi, bank.at(0.0))
    for a, c in state.coefficients.items():
        assert c[0] == base[a]
        assert np.all(c == base[a])


def test_U0_moments_match_coefficients(nonlinear_K2):
    _, traj, bank, state = nonlinear_K2
    for t in (1.0, float(traj.times[-1])):
        table = compute_moments(profile_U0(state, bank, t), bank.at(t))
        for a, c in state.at(t).items():
            assert table[a] == pytest.approx(c, abs=1e-6)


def test_U0_K0_linear_is_mass_times_kernel():
    phi = GRID.sample(lambda x: np.exp(-x**2))
    traj, bank, state = run(phi, NonlinearitySpec.zero(), 0, t_end=5.0)
    u0 = profile_U0(state, bank, 5.0)
    expected = phi.integral() * g_alpha_field(HEAT, GRID, M(0), 5.0)
    assert lq_norm(u0 - expected, math.inf) < 1e-14


def test_kernel_data_is_exact():
    phi = g_alpha_field(HEAT, GRID, M(0), 0.0)
    traj, bank, state = run(phi, NonlinearitySpec.zero(), 2, t_end=10.0)
    for t, u in zip(traj.times[1:], traj.fields[1:]):
        assert lq_norm(u - profile_U0(state, bank, t), 1) < 1e-12


def test_moment_identity(nonlinear_K2):
    _, traj, bank, state = nonlinear_K2
    for t, u in zip(traj.times, traj.fields):
        diff = compute_moments(u - profile_U0(state, bank, t), bank.at(t))
        assert np.max(np.abs(diff.values())) < 1e-6


def test_nesting_and_two_forms(nonlinear_K2):
    phi, traj, bank, state = nonlinear_K2
    U0 = profile_Un(0, state, OP, P4, bank, traj)
    U1 = profile_Un(1, state, OP, P4, bank, traj)
    U1b = profile_Un_identity(1, state, OP, P4, bank, traj, phi)
    for t, a, b, c in zip(traj.times, U0, U1, U1b):
        assert np.max(np.abs(compute_moments(b - a, bank.at(t)).values())) < 1e-6
        assert lq_norm(b - c, 1) < 1e-7


def test_zero_source_levels_agree():
    coeffs = {M(0): 1.0, M(1): 0.3, M(2): -0.2}
    bank = CacheBank(HEAT, GRID, 2)
    phi = expansion_field(coeffs, bank.at(0.0))
    traj, bank, state = run(phi, NonlinearitySpec.zero(), 2, t_end=10.0)
    for n in (1, 2):
        for u, U in zip(traj.fields, profile_Un(n, state, OP, NonlinearitySpec.zero(), bank, traj)):
            assert lq_norm(u - U, 1) < 1e-12


def test_c0_increments_decay_at_margin():
    grid = Grid(1, 400.0, 8192)
    op = SemigroupOperator(HEAT, grid)
    phi = grid.sample(lambda x: np.exp(-x**2))
    bank = CacheBank(HEAT, grid, 0.5)
    traj = solve(op, phi, P4, 1000.0, StepControls())
    state = coefficients(traj, phi, 0.5, bank, A_P, 2.0)
    assert state.increment_slopes[M(0)] == pytest.approx(-A_P, abs=0.1)
    assert state.converged[M(0)]
    assert state.mass == state.limits[M(0)]
    assert state.tail_bounds[M(0)] > 0


def test_no_limit_when_margin_too_small(nonlinear_K2):
    _, _, _, state = nonlinear_K2
    # A_p = 1/2 equals |alpha|/d at |alpha| = 1, and is smaller at |alpha| = 2
    assert M(0) in state.limits
    assert M(1) not in state.limits and M(2) not in state.limits
    assert state.converged[M(2)] is False


def test_state_json(nonlinear):
    _, traj, _, state = nonlinear
    rows = json.loads(json.dumps(state.to_json()))
    assert [r["alpha"] for r in rows] == [[0]]
    assert len(rows[0]["c_of_t"]) == len(traj.times)
    with pytest.raises(KeyError):
        state.at(0.123456)


def test_tilde_linear_is_mass_kernel():
    phi = GRID.sample(lambda x: np.exp(-x**2))
    zero = NonlinearitySpec.zero()
    traj, bank, state = run(phi, zero, 0, t_end=5.0)
    tilde = profile_tilde_u(state, OP, zero, traj, bank, phi)
    U0 = profile_Un(0, state, OP, zero, bank, traj)
    for a, b in zip(tilde.fields, U0):
        assert lq_norm(a - b, math.inf) < 1e-14
    assert tilde.corrected_mass == pytest.approx(phi.integral(), abs=1e-14)


def test_tilde_rejects_K_one(nonlinear_K2):
    phi, traj, bank, state = nonlinear_K2
    with pytest.raises(ValueError):
        profile_tilde_u(state, OP, P4, traj, bank, phi)


def test_symmetric_f_M_has_no_first_moment(nonlinear):
    phi, traj, bank, state = nonlinear
    bank1 = CacheBank(HEAT, GRID, 1)
    g = bank1.at(3.0).field(M(0))
    f_M = P4(3.0, state.mass * g)
    assert abs(compute_moments(f_M, bank1.at(3.0))[M(1)]) < 1e-8


def test_tilde_mass_bookkeeping(nonlinear):
    phi, traj, bank, state = nonlinear
    tilde = profile_tilde_u(state, OP, P4, traj, bank, phi)
    assert tilde.truncated
    # u~ carries the corrected mass plus the f_M Duhamel mass, which tends to int u
    assert abs(tilde.fields[-1].integral() - traj.fields[-1].integral()) < 0.1 * abs(traj.fields[-1].integral())


def test_theorem11_kernel_data_has_no_remainder():
    bank = CacheBank(HEAT, GRID, 2)
    phi = g_alpha_field(HEAT, GRID, M(0), 0.0)
    for v in theorem11_remainder(OP, phi, 2, bank, [1.0, 4.0, 16.0]):
        assert lq_norm(v, 1) < 1e-12


def test_theorem11_remainder_decays():
    grid = Grid(1, 400.0, 8192)
    op = SemigroupOperator(HEAT, grid)
    bank = CacheBank(HEAT, grid, 2)
    phi = grid.sample(lambda x: np.exp(-x**2))
    times = np.geomspace(10, 1000, 12)
    norms = [lq_norm(v, 1) for v in theorem11_remainder(op, phi, 2, bank, times)]
    slope = np.polyfit(np.log(times), np.log(norms), 1)[0]
    assert slope <= -1 + 0.1


def test_moment_free_decay_scaling():
    grid = Grid(1, 400.0, 8192)
    op = SemigroupOperator(HEAT, grid)
    # x e^{-x^2}: vanishing zeroth moment, so int |e^{tL} phi| ~ t^{-1/2}
    phi = grid.sample(lambda x: x * np.exp(-x**2))
    times = np.geomspace(10, 1000, 12)
    slope = np.polyfit(np.log(times), np.log(moment_free_decay(op, phi, 0, times)), 1)[0]
    assert slope == pytest.approx(-0.5, abs=0.05)


@pytest.mark.parametrize("K, d, A, case, n, exponent, log", [
    (1, 2, 0.5, "theorem51", 0, -0.5, True),
    (0.5, 2, 0.5, "theorem51", 1, -0.25, False),
    (1.5, 2, 0.7, "cor51-i", 0, -0.5, False),
    (0.5, 2, 0.5, "cor51-i", 0, -0.25, False),
    (0.5, 2, 0.25, "cor51-i", 0, -0.25, True),
    (1, 2, 0.5, "cor51-i", 0, -0.5, True),
    (2, 2, 0.3, "cor51-ii", 0, -0.3, False),
    (0.5, 2, 0.5, "cor52", 0, -0.25, False),
    (0.5, 2, 0.125, "cor52", 0, -0.25, True),
    (2, 2, None, "theorem11", 0, -1.0, False),
])
def test_prediction_table(K, d, A, case, n, exponent, log):
    pred = predict_rate(K, d, A, case, n)
    assert pred.exponent == pytest.approx(exponent)
    assert pred.log_factor is log


def test_prediction_errors():
    with pytest.raises(ValueError):
        predict_rate(1, 2, 0.0)
    with pytest.raises(ValueError):
        predict_rate(1, 2, 0.5, case="cor52")
    with pytest.raises(ValueError):
        predict_rate(0.5, 2, 0.5, case="cor51-ii")
    with pytest.raises(ValueError):
        predict_rate(1, 2, 0.5, case="nope")


@given(st.floats(0, 6), st.floats(0.2, 6), st.floats(1e-3, 5), st.sampled_from(RATE_CASES),
       st.integers(0, 3))
def test_prediction_total(K, d, A, case, n):
    try:
        pred = predict_rate(K, d, A, case, n)
    except ValueError:
        assert (case == "cor52" and K >= 1) or (case == "cor51-ii" and K < 1)
        return
    assert pred.exponent <= 0
    assert pred.case.startswith(case)
