import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from diffasym.expansion import RatePrediction
from diffasym.rates import (
    FAIL,
    INCONCLUSIVE,
    PASS,
    POWER_LOG,
    PURE,
    NormTrajectory,
    RateError,
    RateFit,
    compare,
    compare_little_o,
    fit_last_decades,
    fit_rate,
    fits_to_json,
    judged_slope,
    verdict_table,
)

T = np.geomspace(10, 1e4, 25)


def fake_fit(slope, stderr=0.01, log_slope=None):
    return RateFit(slope, stderr, 0.0, PURE, (1.0, 100.0), slope, stderr, 20, 0.0, None,
                   log_slope, None if log_slope is None else stderr)


def test_exact_power_law():
    fit = fit_rate(NormTrajectory(T, T**-2.0))
    assert fit.slope == pytest.approx(-2.0, abs=1e-12)
    assert fit.preferred_model == PURE


def test_power_log_detected():
    fit = fit_rate(NormTrajectory(T, np.log(T) / T))
    assert fit.preferred_model == POWER_LOG
    assert fit.slope == pytest.approx(-1.0, abs=0.05)
    assert fit.log_divided_slope == pytest.approx(-1.0, abs=1e-12)


def test_constant():
    fit = fit_rate(NormTrajectory(T, np.full_like(T, 3.0)))
    assert fit.slope == pytest.approx(0.0, abs=1e-12)


def test_window_requirements():
    with pytest.raises(RateError):
        fit_rate(NormTrajectory(np.geomspace(1, 10, 30), np.ones(30)))
    with pytest.raises(RateError):
        fit_rate(NormTrajectory(np.geomspace(1, 1e3, 5), np.ones(5)))


def test_trajectory_drops_nonpositive():
    traj = NormTrajectory([1, 2, 3, 4], [1.0, 0.0, np.nan, 2.0])
    assert traj.dropped == 2 and traj.rows() == [(1.0, 1.0), (4.0, 2.0)]
    with pytest.raises(ValueError):
        NormTrajectory([2, 1], [1, 1])


def test_scaled():
    traj = NormTrajectory(T, T**-1.5).scaled(1.5)
    np.testing.assert_allclose(traj.values, 1.0)


@pytest.mark.parametrize("slope, stderr, verdict", [
    (-1.02, 0.01, PASS),
    (-0.7, 0.01, FAIL),
    (-1.0, 0.5, INCONCLUSIVE),
    (-0.95, 0.01, PASS),
])
def test_compare_examples(slope, stderr, verdict):
    pred = RatePrediction(-1.0, False, "theorem51")
    assert compare(fake_fit(slope, stderr), pred, 0.1) == verdict


def test_compare_log_prediction_uses_log_divided_slope():
    pred = RatePrediction(-0.5, True, "theorem51:log")
    fit = fake_fit(-0.3, log_slope=-0.52)
    assert judged_slope(fit, pred) == (-0.52, 0.01)
    assert compare(fit, pred) == PASS


def test_little_o():
    assert compare_little_o(fake_fit(-1.2, 0.05), -1.0) == PASS
    assert compare_little_o(fake_fit(-1.02, 0.05), -1.0) == FAIL


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 1), st.floats(0.01, 100), st.floats(0.1, 10))
def test_equivariance(b, c, s):
    base = fit_rate(NormTrajectory(T, T**b))
    assert fit_rate(NormTrajectory(T, c * T**b)).slope == pytest.approx(base.slope, abs=1e-10)
    moved = fit_rate(NormTrajectory(s * T, (s * T) ** b * np.ones_like(T)))
    assert moved.power_slope == pytest.approx(b, abs=1e-10)


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 0), st.floats(0, 2), st.floats(0.05, 0.2))
def test_pass_is_monotone(slope, faster, tol):
    pred = RatePrediction(-1.0, False, "theorem51")
    if compare(fake_fit(slope), pred, tol) == PASS:
        assert compare(fake_fit(slope - faster), pred, tol) == PASS


def test_fit_last_decades():
    t = np.geomspace(1, 1000, 40)
    v = np.where(t < 10, t**-0.2, 10**-0.2 * (t / 10) ** -1.0)
    fit = fit_last_decades(NormTrajectory(t, v), 1.5)
    assert fit.window[1] == pytest.approx(1000)
    assert fit.window[0] <= 1000 / 10**1.5
    with pytest.raises(RateError):
        fit_last_decades(NormTrajectory(np.geomspace(1, 10, 10), np.ones(10)))


def test_exports():
    fit = fit_rate(NormTrajectory(T, T**-1.0))
    data = json.loads(fits_to_json({"a": fit}))
    assert data["a"]["slope"] == pytest.approx(-1.0)
    table = verdict_table([("x", "Eq. 1.12", -1.0, -1.01, PASS)])
    assert "Eq. 1.12" in table and table.splitlines()[0].startswith("check")
