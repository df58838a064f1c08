"""Decay-rate estimation from norm trajectories."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .expansion import RatePrediction

PASS, FAIL, INCONCLUSIVE = "PASS", "FAIL", "INCONCLUSIVE"
PURE, POWER_LOG = "pure-power", "power-log"

MIN_SAMPLES = 6
MIN_DECADES = 1.5
PARSIMONY = 0.10  # relative RSS drop the log term must buy


class RateError(ValueError):
    """The sample window cannot support a fit."""


@dataclass
class NormTrajectory:
    """Samples (t, value) of a norm, with zeros and non-finite values dropped."""

    times: np.ndarray
    values: np.ndarray
    label: str = ""
    dropped: int = 0

    def __init__(self, times, values, label: str = ""):
        t = np.asarray(times, dtype=float)
        v = np.asarray(values, dtype=float)
        if t.shape != v.shape or t.ndim != 1:
            raise ValueError("times and values must be 1D of equal length")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        keep = np.isfinite(v) & (v > 0)
        self.times = t[keep]
        self.values = v[keep]
        self.label = label
        self.dropped = int((~keep).sum())

    def window(self, t_lo: float | None = None, t_hi: float | None = None) -> "NormTrajectory":
        lo = -np.inf if t_lo is None else t_lo
        hi = np.inf if t_hi is None else t_hi
        mask = (self.times >= lo * (1 - 1e-12)) & (self.times <= hi * (1 + 1e-12))
        return NormTrajectory(self.times[mask], self.values[mask], self.label)

    def scaled(self, exponent: float, label: str | None = None) -> "NormTrajectory":
        """t^exponent times the values."""
        return NormTrajectory(self.times, self.times**exponent * self.values,
                              label if label is not None else f"t^{exponent:g}*{self.label}")

    def rows(self):
        return list(zip(self.times.tolist(), self.values.tolist()))


@dataclass
class RateFit:
    slope: float
    slope_stderr: float
    log_coefficient: float
    preferred_model: str
    window: tuple[float, float]
    power_slope: float
    power_stderr: float
    samples: int
    rss_power: float
    rss_log: float | None
    log_divided_slope: float | None = None
    log_divided_stderr: float | None = None

    def to_json(self) -> dict:
        out = asdict(self)
        out["window"] = list(self.window)
        return out


def _lstsq(design: np.ndarray, y: np.ndarray):
    coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    rss = float(resid @ resid)
    dof = len(y) - design.shape[1]
    if dof > 0 and rank == design.shape[1]:
        cov = (rss / dof) * np.linalg.inv(design.T @ design)
        err = np.sqrt(np.maximum(np.diag(cov), 0.0))
    else:
        err = np.full(design.shape[1], np.inf)
    return coef, err, rss


def fit_rate(traj: NormTrajectory, t_lo: float | None = None, t_hi: float | None = None) -> RateFit:
    """Fit log v = a + b log t, and on t > e also log v = a + b log t + c log log t.

    The power-log model is preferred only when it cuts the residual sum of
    squares by at least 10%.
    """
    w = traj.window(t_lo, t_hi)
    n = len(w.times)
    if n < MIN_SAMPLES:
        raise RateError(f"{n} samples in window, need {MIN_SAMPLES}")
    decades = math.log10(w.times[-1] / w.times[0]) if w.times[0] > 0 else 0.0
    if decades < MIN_DECADES - 1e-12:
        raise RateError(f"window spans {decades:.2f} decades, need {MIN_DECADES}")
    lt, lv = np.log(w.times), np.log(w.values)
    ones = np.ones(n)
    coef, err, rss = _lstsq(np.column_stack([ones, lt]), lv)
    power_slope, power_err = float(coef[1]), float(err[1])
    fit = RateFit(power_slope, power_err, 0.0, PURE, (float(w.times[0]), float(w.times[-1])),
                  power_slope, power_err, n, rss, None)

    above = w.times > math.e
    if above.sum() >= MIN_SAMPLES:
        lt2, lv2 = lt[above], lv[above]
        m = len(lt2)
        base, _, rss_base = _lstsq(np.column_stack([np.ones(m), lt2]), lv2)
        coef2, err2, rss2 = _lstsq(np.column_stack([np.ones(m), lt2, np.log(lt2)]), lv2)
        fit.rss_log = rss2
        c3, e3, _ = _lstsq(np.column_stack([np.ones(m), lt2]), lv2 - np.log(lt2))
        fit.log_divided_slope, fit.log_divided_stderr = float(c3[1]), float(e3[1])
        scale = max(rss_base, 1e-28 * m)
        if rss_base - rss2 >= PARSIMONY * scale and rss_base > 1e-24 * m:
            fit.slope = float(coef2[1])
            fit.slope_stderr = float(err2[1])
            fit.log_coefficient = float(coef2[2])
            fit.preferred_model = POWER_LOG
    return fit


def compare(fit: RateFit, pred: RatePrediction, tol: float = 0.1) -> str:
    """One-sided verdict: faster decay than predicted is consistent.

    O(t^b) predictions are judged on the pure-power slope. O(t^b log t)
    predictions are judged on the slope of v / log t, which is O(t^b).
    """
    slope, err = judged_slope(fit, pred)
    if err is None or not np.isfinite(err) or err > tol:
        return INCONCLUSIVE
    return PASS if slope <= pred.exponent + tol else FAIL


def judged_slope(fit: RateFit, pred: RatePrediction) -> tuple[float, float | None]:
    """The slope and standard error that `compare` tests against `pred`."""
    if pred.log_factor:
        return fit.log_divided_slope, fit.log_divided_stderr
    return fit.power_slope, fit.power_stderr


def compare_little_o(fit: RateFit, threshold: float) -> str:
    """o(t^threshold): the windowed slope must sit below threshold by at least stderr."""
    if not np.isfinite(fit.power_stderr):
        return INCONCLUSIVE
    return PASS if fit.power_slope <= threshold - fit.power_stderr else FAIL


def fits_to_json(fits: dict[str, RateFit]) -> str:
    return json.dumps({k: f.to_json() for k, f in fits.items()}, indent=2, sort_keys=True)


def verdict_table(rows) -> str:
    """Plain-text table from (name, anchor, predicted, fitted, verdict) rows."""
    header = ("check", "anchor", "predicted", "fitted", "verdict")
    cells = [header] + [tuple("" if c is None else (f"{c:.4g}" if isinstance(c, float) else str(c))
                              for c in row) for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def fit_last_decades(traj: NormTrajectory, decades: float = MIN_DECADES) -> RateFit:
    """fit_rate over the shortest trailing window spanning `decades` decades."""
    if not len(traj.times):
        raise RateError("empty trajectory")
    target = traj.times[-1] / 10.0**decades
    earlier = traj.times[traj.times <= target * (1 + 1e-12)]
    if not len(earlier):
        raise RateError(f"trajectory spans fewer than {decades} decades")
    return fit_rate(traj, float(earlier[-1]))
