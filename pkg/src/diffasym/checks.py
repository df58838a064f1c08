"""Registry of numerical checks and the shared per-run context they draw on.

Each check turns one asymptotic statement into a measured quantity and a
verdict. Anchors name the statement being exercised.
"""

from __future__ import annotations

import io
import json
import math
import threading
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import rates
from .duhamel import (
    BlowUpError,
    NonlinearitySpec,
    SourceHistory,
    solve,
    solution_bound_band,
    remainder_RK,
    time_grid,
)
from .expansion import (
    RatePrediction,
    coefficients,
    predict_rate,
    profile_tilde_u,
    profile_Un,
    profile_Un_identity,
    theorem11_remainder,
)
from .grid import Field, TailDominanceError, lq_norm, weighted_l1_norm
from .kernel import ResolutionError, TruncationError, check_window, validate_condition_G
from .moments import CacheBank, compute_moments, project, raw_moments, verify_lemma21, verify_lemma22
from .multiindex import MultiIndex, bracket, enumerate_indices
from .scenario import ConfigError, Scenario
from .semigroup import SemigroupOperator, verify_smoothing

PASS, FAIL, INCONCLUSIVE = rates.PASS, rates.FAIL, rates.INCONCLUSIVE
IDENTITY_TOL = 1e-6
U1_PATHS_TOL = 1e-7
BAND_LIMIT = 4.0  # max/min of (1+t)^{N/d} ||u||_inf over the run


@dataclass
class CheckResult:
    name: str
    anchor: str
    predicted: float | str | None
    fitted: float | None
    verdict: str
    details: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)  # file name -> text

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "anchor": self.anchor,
            "predicted": self.predicted,
            "fitted": self.fitted,
            "verdict": self.verdict,
            "details": self.details,
        }

    def row(self):
        return (self.name, self.anchor, self.predicted, self.fitted, self.verdict)


@dataclass(frozen=True)
class Check:
    name: str
    anchor: str
    title: str
    mode: str  # "linear", "nonlinear" or "any"
    runner: Callable[["RunContext"], CheckResult]
    applies: Callable[[Scenario], bool] = lambda s: True

    def enabled_for(self, scenario: Scenario) -> bool:
        if self.mode == "nonlinear" and not scenario.nonlinear:
            return False
        return self.applies(scenario)


class RunContext:
    """Lazily built objects shared by the checks of one run (thread safe)."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.spec = scenario.kernel_spec()
        self.grid = scenario.build_grid()
        self.op = SemigroupOperator(self.spec, self.grid)
        self.phi = scenario.phi.build(self.grid, self.spec)
        self.K = scenario.K
        self.d = self.spec.scaling_exponent
        self.N = self.spec.dimension
        self.F = scenario.nonlinearity.build() if scenario.nonlinear else NonlinearitySpec.zero()
        self.A_p = scenario.decay_margin()
        self.tol = scenario.checks.slope_tol
        self.nl_tol = scenario.checks.nonlinear_slope_tol
        self.decades = scenario.checks.fit_decades
        self._lock = threading.RLock()
        self._cache: dict = {}

    def lazy(self, key, build):
        with self._lock:
            if key not in self._cache:
                self._cache[key] = build()
            return self._cache[key]

    @property
    def bank(self) -> CacheBank:
        return self.lazy("bank", lambda: CacheBank(self.spec, self.grid, self.K))

    @property
    def sample_times(self) -> np.ndarray:
        return self.scenario.snapshot_times()

    @property
    def linear_fields(self) -> list[Field]:
        return self.lazy("linear", lambda: [self.op.apply(self.phi, t) for t in self.sample_times])

    @property
    def trajectory(self):
        return self.lazy("traj", lambda: solve(
            self.op, self.phi, self.F, self.scenario.t_end, self.scenario.solver.build(),
            snapshots=tuple(self.sample_times)))

    @property
    def state(self):
        return self.lazy("state", lambda: coefficients(
            self.trajectory, self.phi, self.K, self.bank, self.A_p, self.d))

    def profile(self, n: int) -> list[Field]:
        return self.lazy(("U", n), lambda: profile_Un(
            n, self.state, self.op, self.F, self.bank, self.trajectory))

    @property
    def tilde(self):
        return self.lazy("tilde", lambda: profile_tilde_u(
            self.state, self.op, self.F, self.trajectory, self.bank, self.phi))

    def built(self, key) -> bool:
        return key in self._cache

    def late_mask(self, times) -> np.ndarray:
        return np.asarray(times) >= 1.0


def norms_csv(times, raw, scaled) -> str:
    buf = io.StringIO()
    buf.write("t,raw,scaled\n")
    for t, r, s in zip(times, raw, scaled):
        buf.write(f"{float(t)!r},{float(r)!r},{float(s)!r}\n")
    return buf.getvalue()


def _fit(ctx: RunContext, times, values, label: str) -> rates.RateFit:
    return rates.fit_last_decades(rates.NormTrajectory(times, values, label), ctx.decades)


def _fit_details(fit: rates.RateFit) -> dict:
    return fit.to_json()


def _distance_check(ctx: RunContext, name: str, anchor: str, profile: list[Field],
                    pred, label: str) -> CheckResult:
    """Fit ||u - profile||_1 on the solver's step times t >= 1 and compare."""
    traj = ctx.trajectory
    mask = ctx.late_mask(traj.times)
    times = traj.times[mask]
    raw = np.array([lq_norm(u - p, 1) for u, p, m in zip(traj.fields, profile, mask) if m])
    scaled = times ** (-pred.exponent) * raw
    fit = _fit(ctx, times, raw, label)
    verdict = rates.compare(fit, pred, ctx.nl_tol)
    slope, _ = rates.judged_slope(fit, pred)
    details = {"prediction": pred.__dict__, "fit": _fit_details(fit), "tolerance": ctx.nl_tol}
    return CheckResult(name, anchor, pred.exponent, slope, verdict, details,
                       {f"norms_{label}.csv": norms_csv(times, raw, scaled)})


# ----- kernel and linear machinery ------------------------------------------

def check_condition_G(ctx: RunContext) -> CheckResult:
    ck_tol = 1e-7 if ctx.spec.family == "heat" else 1e-5
    grid = ctx.scenario.build_validation_grid()
    rep = validate_condition_G(ctx.spec, grid, ck_tolerance=ck_tol)
    details = {
        "self_similarity": rep.self_similarity,
        "envelope": {str(k): v for k, v in rep.envelope.items()},
        "envelope_growth": {str(k): v for k, v in rep.envelope_growth.items()},
        "chapman_kolmogorov": rep.chapman_kolmogorov,
        "notes": rep.notes,
        "grid": {"half_extent": grid.half_extent, "points_per_axis": grid.points_per_axis},
    }
    fitted = max(rep.self_similarity, rep.chapman_kolmogorov)
    return CheckResult("kernel.condition_G", "condition (G)", "residuals small",
                       fitted, PASS if rep.passed else FAIL, details)


def _resolved_times(ctx: RunContext, times) -> np.ndarray:
    keep = []
    for t in times:
        try:
            check_window(ctx.spec, ctx.grid, t, truncation_factor=0)
            keep.append(t)
        except ResolutionError:
            pass
    return np.array(keep)


def check_smoothing(ctx: RunContext) -> CheckResult:
    times = _resolved_times(ctx, ctx.sample_times)
    if len(times) < 4:
        return CheckResult("semigroup.smoothing", "Eq. 2.3", None, None, INCONCLUSIVE,
                           {"reason": "fewer than four resolved sample times"})
    fit = verify_smoothing(ctx.op, ctx.phi, math.inf, 1.0, times)
    verdict = PASS if fit.slope <= fit.expected + 0.05 else FAIL
    details = {"expected": fit.expected, "slope": fit.slope, "q": "inf", "r": 1,
               "one_sided": True}
    scaled = times ** (-fit.expected) * fit.norms
    return CheckResult("semigroup.smoothing", "Eq. 2.3", fit.expected, fit.slope, verdict,
                       details, {"norms_smoothing_linf.csv": norms_csv(times, fit.norms, scaled)})


def check_lemma21_conservation(ctx: RunContext) -> CheckResult:
    times = [0.0] + [t for t in ctx.sample_times if t <= 16.0]
    rep = verify_lemma21(ctx.op, ctx.phi, ctx.K, times)
    verdict = PASS if rep.conservation <= IDENTITY_TOL else FAIL
    return CheckResult("lemma21.conservation", "Lemma 2.1(iv)", IDENTITY_TOL, rep.conservation,
                       verdict, {"per_time": rep.per_time})


def _moment_free(s: Scenario) -> bool:
    k = s.phi.moment_free_order
    return k is not None and k >= bracket(s.K)


def check_lemma21_vanishing(ctx: RunContext) -> CheckResult:
    times = [0.0] + [t for t in ctx.sample_times if t <= 16.0]
    worst = 0.0
    per_time = []
    for t in times:
        evolved = ctx.op.apply(ctx.phi, t)
        v = max(abs(m) for m in raw_moments(evolved, ctx.K).values())
        worst = max(worst, v)
        per_time.append({"t": float(t), "max_moment": v})
    scale = 1.0 + weighted_l1_norm(ctx.phi, ctx.K)
    verdict = PASS if worst <= IDENTITY_TOL * scale else FAIL
    return CheckResult("lemma21.vanishing", "Lemma 2.1(v)", IDENTITY_TOL * scale, worst, verdict,
                       {"per_time": per_time})


def check_lemma21_projection(ctx: RunContext) -> CheckResult:
    scale = 1.0 + weighted_l1_norm(ctx.phi, ctx.K)
    worst = 0.0
    per_time = []
    for t in (0.0, 1.0, 4.0):
        cache = ctx.bank.at(t)
        f = ctx.phi.at_time(t)
        pf = project(f, compute_moments(f, cache), cache)
        v = max(abs(m) for m in raw_moments(pf, ctx.K).values())
        worst = max(worst, v)
        per_time.append({"t": t, "max_moment": v})
    verdict = PASS if worst < IDENTITY_TOL * scale else FAIL
    return CheckResult("lemma21.projection", "Lemma 2.1(ii)", IDENTITY_TOL * scale, worst, verdict,
                       {"per_time": per_time})


def check_lemma21_delta(ctx: RunContext) -> CheckResult:
    worst = 0.0
    for t in (0.0, 1.0, 4.0):
        cache = ctx.bank.at(t)
        for b in cache.indices:
            table = compute_moments(cache.field(b).at_time(t), cache)
            for a, v in table.entries.items():
                worst = max(worst, abs(v - (1.0 if a == b else 0.0)))
    verdict = PASS if worst <= IDENTITY_TOL else FAIL
    return CheckResult("lemma21.delta", "Lemma 2.1(iii)", IDENTITY_TOL, worst, verdict)


def check_lemma22(ctx: RunContext) -> CheckResult:
    if ctx.scenario.nonlinear:
        fields = [n.field for step in ctx.trajectory.source.steps for n in step.nodes
                  if n.time > 0]
        # several nodes share a time; keep the last one per time
        by_time = {f.time: f for f in fields}
        fields = [by_time[t] for t in sorted(by_time)]
    else:
        fields = ctx.linear_fields
    t_end = max(f.time for f in fields)
    early = [f for f in fields if f.time <= t_end / 10]
    late = [f for f in fields if f.time > t_end / 10]
    if not early or not late:
        return CheckResult("lemma22.bounds", "Lemma 2.2", None, None, INCONCLUSIVE,
                           {"reason": "time samples do not cover a decade"})
    q, ell = math.inf, ctx.K
    r_early = verify_lemma22(early, ctx.spec, q, ctx.K, ell, ctx.bank)
    r_late = verify_lemma22(late, ctx.spec, q, ctx.K, ell, ctx.bank)
    growth = max(getattr(r_late, k) / max(getattr(r_early, k), 1e-300)
                 for k in ("lq_bound", "weighted_bound", "moment_bound", "projection_bound"))
    details = {"early": r_early.__dict__, "late": r_late.__dict__, "growth_limit": 1.5}
    return CheckResult("lemma22.bounds", "Lemma 2.2", 1.5, growth,
                       PASS if growth <= 1.5 else FAIL, details)


def _prop31_window(times: np.ndarray) -> float:
    return float(times[-1] / 100.0) if times[-1] / times[0] >= 100.0 else None


def check_prop31(ctx: RunContext) -> CheckResult:
    k = ctx.scenario.phi.moment_free_order
    times = ctx.sample_times
    raw = np.array([lq_norm(f, 1) for f in ctx.linear_fields])
    expected = -k / ctx.d
    traj = rates.NormTrajectory(times, raw, "prop31")
    t_lo = _prop31_window(times)
    fit = rates.fit_rate(traj, t_lo) if t_lo else rates.fit_last_decades(traj, ctx.decades)
    pred = predict_rate(k, ctx.d, case="theorem11")
    verdict = rates.compare(fit, pred, ctx.tol)
    details = {"k": k, "fit": _fit_details(fit), "sharp_gap": fit.power_slope - expected,
               "faster_rate_bound": -(k + 1) / ctx.d}
    scaled = times ** (-expected) * raw
    return CheckResult("prop31.decay", "Prop. 3.1(ii)", expected, fit.power_slope, verdict,
                       details, {"norms_prop31_l1.csv": norms_csv(times, raw, scaled)})


def _remainder(ctx: RunContext) -> list[Field]:
    return ctx.lazy("v", lambda: theorem11_remainder(
        ctx.op, ctx.phi, ctx.K, ctx.bank, ctx.sample_times))


def check_thm11_bound(ctx: RunContext) -> CheckResult:
    times = ctx.sample_times
    K, d = ctx.K, ctx.d
    v = _remainder(ctx)
    raw = np.array([lq_norm(f, 1) + (1 + t) ** (-K / d) * weighted_l1_norm(f, K)
                    for t, f in zip(times, v)])
    scaled = times ** (K / d) * raw / weighted_l1_norm(ctx.phi, K)
    fit = _fit(ctx, times, scaled, "thm11_bound")
    pred = predict_rate(0.0, d, case="theorem11")
    verdict = rates.compare(fit, pred, ctx.tol)
    details = {"C": float(scaled.max()), "fit": _fit_details(fit)}
    return CheckResult("thm11.bound", "Eq. 1.12", 0.0, fit.power_slope, verdict, details,
                       {"norms_thm11_bound.csv": norms_csv(times, raw, scaled)})


def check_thm11_little_o(ctx: RunContext) -> CheckResult:
    times = ctx.sample_times
    v = _remainder(ctx)
    raw = np.array([lq_norm(f, 1) for f in v])
    scaled = times ** (ctx.K / ctx.d) * raw
    fit = _fit(ctx, times, scaled, "thm11_o")
    verdict = rates.compare_little_o(fit, 0.0)
    decade = times >= times[-1] / 10 * (1 - 1e-12)
    decreasing = bool(scaled[decade][-1] < scaled[decade][0])
    if verdict == PASS and not decreasing:
        verdict = FAIL
    details = {"fit": _fit_details(fit), "decreasing_last_decade": decreasing}
    return CheckResult("thm11.little_o", "Eq. 1.13", "slope < 0", fit.power_slope, verdict,
                       details, {"norms_thm11_v_l1.csv": norms_csv(times, raw, scaled)})


def manufactured_source(grid, K: float, d: float):
    """f(s) = (1+s)^{-a} (1 + x_1 + x_1^2/2) exp(-|x - 0.3 e_1|^2) with
    a = max(2, K/d + 1.5), so that the integral of E_{K,1}[f] is finite."""
    x1 = grid.coords[0]
    shifted = (x1 - 0.3) ** 2 + sum(c**2 for c in grid.coords[1:])
    shape = (1.0 + x1 + 0.5 * x1**2) * np.exp(-shifted)
    power = max(2.0, K / d + 1.5)
    return lambda s: Field(grid, (1.0 + s) ** (-power) * shape, s), power


def check_thm12(ctx: RunContext) -> CheckResult:
    sc = ctx.scenario
    fn, power = manufactured_source(ctx.grid, ctx.K, ctx.d)
    times = time_grid(sc.t_end, sc.solver.dt, sc.solver.growth, tuple(ctx.sample_times))
    source = SourceHistory.from_function(times, fn, sc.solver.scheme)
    R = remainder_RK(ctx.op, source, ctx.bank)
    mask = times >= 1.0
    raw = np.array([lq_norm(r, 1) for r, m in zip(R, mask) if m])
    t = times[mask]
    scaled = t ** (ctx.K / ctx.d) * raw
    fit = _fit(ctx, t, scaled, "thm12")
    ok = fit.power_slope < 0 and fit.power_stderr < 0.05
    details = {"source_power": power, "fit": _fit_details(fit)}
    return CheckResult("thm12.remainder", "Eq. 1.17", "slope < 0", fit.power_slope,
                       PASS if ok else FAIL, details,
                       {"norms_thm12_RK_l1.csv": norms_csv(t, raw, scaled)})


# ----- nonlinear problem -----------------------------------------------------

def check_mass_ledger(ctx: RunContext) -> CheckResult:
    traj = ctx.trajectory
    ledger = traj.mass_ledger()
    scale = max(1.0, lq_norm(ctx.phi, 1))
    verdict = PASS if abs(ledger) <= 1e-10 * scale else FAIL
    return CheckResult("solver.mass_ledger", "Eq. 5.2", 1e-10 * scale, abs(ledger), verdict,
                       {"steps": len(traj.times) - 1, "scheme": traj.scheme})


def check_global_bound(ctx: RunContext) -> CheckResult:
    band = solution_bound_band(ctx.trajectory, ctx.d)
    return CheckResult("solver.global_bound", "Theorem 5.1 (global bounded solution)", BAND_LIMIT,
                       band, PASS if band <= BAND_LIMIT else FAIL, {"q": "inf", "t_min": 1.0})


def check_coefficients(ctx: RunContext) -> CheckResult:
    state = ctx.state
    traj = ctx.trajectory
    verdicts, details, artifacts = [], {}, {}
    artifacts["expansion_c.json"] = json.dumps(state.to_json(), indent=2)
    times = traj.times
    for a, c in state.coefficients.items():
        rate = ctx.A_p - a.order / ctx.d
        key = "alpha=" + ",".join(map(str, a.entries))
        if rate <= 0:
            details[key] = {"limit": None, "reason": "A_p <= |alpha|/d, no limit asserted"}
            continue
        mask = times >= 2.0
        c_half = np.interp(np.log(times[mask] / 2), np.log(times[1:]), c[1:])
        inc = np.abs(c[mask] - c_half)
        scale = max(float(np.abs(c).max()), 1e-300)
        if np.all(inc <= 1e-13 * scale):
            details[key] = {"limit": state.limits.get(a), "reason": "c_alpha constant"}
            continue
        try:
            fit = _fit(ctx, times[mask], inc, f"c_{key}")
        except rates.RateError as exc:
            details[key] = {"reason": str(exc)}
            verdicts.append(INCONCLUSIVE)
            continue
        pred = RatePrediction(-rate, False, "coefficient-increment")
        v = rates.compare(fit, pred, ctx.nl_tol)
        verdicts.append(v)
        details[key] = {"predicted": -rate, "fit": _fit_details(fit), "verdict": v,
                        "limit": state.limits.get(a), "converged": state.converged.get(a),
                        "tail_bound": state.tail_bounds.get(a)}
        artifacts[f"norms_c_increment_{'_'.join(map(str, a.entries))}.csv"] = norms_csv(
            times[mask], inc, times[mask] ** rate * inc)
    verdict = FAIL if FAIL in verdicts else (INCONCLUSIVE if INCONCLUSIVE in verdicts else PASS)
    fitted0 = details.get("alpha=" + ",".join(["0"] * ctx.N), {}).get("fit", {}).get("power_slope")
    return CheckResult("expansion.coefficients", "Eq. 5.5", -ctx.A_p, fitted0, verdict, details,
                       artifacts)


def check_moment_identity(ctx: RunContext) -> CheckResult:
    traj = ctx.trajectory
    U0 = ctx.profile(0)
    worst = 0.0
    for t, u, p in zip(traj.times, traj.fields, U0):
        if t in traj.snapshot_times or t == traj.times[-1]:
            cache = ctx.bank.at(t)
            table = compute_moments(u - p, cache)
            scale = 1.0 + weighted_l1_norm(u, ctx.K)
            worst = max(worst, float(np.max(np.abs(table.values()))) / scale)
    return CheckResult("expansion.moment_identity", "Eq. 5.6", IDENTITY_TOL, worst,
                       PASS if worst <= IDENTITY_TOL else FAIL)


def check_U1_paths(ctx: RunContext) -> CheckResult:
    projected = ctx.profile(1)
    identity = profile_Un_identity(1, ctx.state, ctx.op, ctx.F, ctx.bank, ctx.trajectory, ctx.phi)
    worst = max(lq_norm(a - b, math.inf) for a, b in zip(projected, identity))
    return CheckResult("expansion.U1_paths", "Eq. 5.7", U1_PATHS_TOL, worst,
                       PASS if worst <= U1_PATHS_TOL else FAIL)


def check_U0(ctx: RunContext) -> CheckResult:
    pred = predict_rate(ctx.K, ctx.d, ctx.A_p, "theorem51", n=0)
    return _distance_check(ctx, "thm51.U0", "Eq. 5.9", ctx.profile(0), pred, "u_minus_U0_l1")


def check_Un(ctx: RunContext) -> CheckResult:
    results = []
    for n in range(1, ctx.scenario.n_levels + 1):
        pred = predict_rate(ctx.K, ctx.d, ctx.A_p, "theorem51", n=n)
        results.append(_distance_check(ctx, f"thm51.U{n}", "Eq. 5.9", ctx.profile(n), pred,
                                       f"u_minus_U{n}_l1"))
    verdicts = [r.verdict for r in results]
    verdict = FAIL if FAIL in verdicts else (INCONCLUSIVE if INCONCLUSIVE in verdicts else PASS)
    first = results[0]
    artifacts = {k: v for r in results for k, v in r.artifacts.items()}
    details = {r.name: {**r.details, "verdict": r.verdict} for r in results}
    return CheckResult("thm51.Un", "Eq. 5.9", first.predicted, first.fitted, verdict, details,
                       artifacts)


def _mass_profile(ctx: RunContext) -> list[Field]:
    zero = MultiIndex.zero(ctx.N)
    M = ctx.state.mass
    return [M * ctx.bank.at(t).field(zero).at_time(t) for t in ctx.trajectory.times]


def check_cor51(ctx: RunContext) -> CheckResult:
    pred = predict_rate(ctx.K, ctx.d, ctx.A_p, "cor51-i")
    res = _distance_check(ctx, "cor51.mass", "Eq. 5.14", _mass_profile(ctx), pred, "u_minus_Mg_l1")
    res.details["M"] = ctx.state.mass
    return res


def check_cor51_ii(ctx: RunContext) -> CheckResult:
    """Integrability of the first-order moments of f_M, then the rate."""
    traj = ctx.trajectory
    M = ctx.state.mass
    zero = MultiIndex.zero(ctx.N)
    firsts = [a for a in enumerate_indices(ctx.N, 1) if a.order == 1]
    times, values = [], []
    for t in traj.times[1:]:
        cache = ctx.bank.at(t)
        fM = ctx.F(t, M * cache.field(zero).at_time(t))
        table = compute_moments(fM, cache)
        times.append(t)
        values.append(max(abs(table[a]) for a in firsts))
    times, values = np.array(times), np.array(values)
    scale = max(float(np.max(np.abs(values))), 1e-300)
    details = {"moment_scale": scale}
    if np.all(values <= 1e-12 * max(1.0, lq_norm(ctx.phi, 1))):
        hypothesis = True
        details["hypothesis"] = "first-order moments of f_M vanish"
    else:
        mask = times >= 1.0
        fit = _fit(ctx, times[mask], values[mask], "fM_first_moments")
        hypothesis = fit.power_slope + fit.power_stderr < -1.0
        details["hypothesis"] = {"tail_slope": fit.power_slope, "stderr": fit.power_stderr,
                                 "integrable": hypothesis}
    pred = predict_rate(ctx.K, ctx.d, ctx.A_p, "cor51-ii")
    res = _distance_check(ctx, "cor51.integrability", "Eq. 5.15", _mass_profile(ctx), pred,
                          "u_minus_Mg_l1_ii")
    res.details.update(details)
    res.artifacts = {}
    if not hypothesis:
        res.verdict = INCONCLUSIVE
    return res


def check_cor52(ctx: RunContext) -> CheckResult:
    tilde = ctx.tilde
    pred = predict_rate(ctx.K, ctx.d, ctx.A_p, "cor52")
    res = _distance_check(ctx, "cor52.tilde", "Eq. 5.18", tilde.fields, pred, "u_minus_tilde_l1")
    res.details.update({"M": tilde.mass, "M_prime": tilde.corrected_mass,
                        "tail_integrand": tilde.tail_integrand, "tail_slope": tilde.tail_slope,
                        "truncated_at_t_end": tilde.truncated})
    res.artifacts["expansion_tilde.json"] = json.dumps(
        {"M": tilde.mass, "M_prime": tilde.corrected_mass, "tail_integrand": tilde.tail_integrand,
         "tail_slope": tilde.tail_slope, "truncated_at_t_end": tilde.truncated}, indent=2)
    return res


REGISTRY: tuple[Check, ...] = (
    Check("kernel.condition_G", "condition (G)", "kernel scaling, decay and semigroup residuals",
          "any", check_condition_G),
    Check("semigroup.smoothing", "Eq. 2.3", "L^inf decay slope of e^{tL} phi", "any",
          check_smoothing),
    Check("lemma21.projection", "Lemma 2.1(ii)", "moments of P_K f vanish", "any",
          check_lemma21_projection),
    Check("lemma21.delta", "Lemma 2.1(iii)", "M_alpha(g_beta) = delta", "any", check_lemma21_delta),
    Check("lemma21.conservation", "Lemma 2.1(iv)", "M_alpha conserved under the flow", "any",
          check_lemma21_conservation),
    Check("lemma21.vanishing", "Lemma 2.1(v)", "vanishing moments stay vanishing", "any",
          check_lemma21_vanishing, _moment_free),
    Check("lemma22.bounds", "Lemma 2.2", "E_{K,q} controls norms, moments and P_K f", "any",
          check_lemma22),
    Check("prop31.decay", "Prop. 3.1(ii)", "decay of moment-free data", "any", check_prop31,
          lambda s: s.phi.moment_free_order is not None),
    Check("thm11.bound", "Eq. 1.12", "t^{K/d} ||v|| bounded", "any", check_thm11_bound),
    Check("thm11.little_o", "Eq. 1.13", "t^{K/d} ||v||_1 -> 0", "any", check_thm11_little_o),
    Check("thm12.remainder", "Eq. 1.17", "t^{K/d} ||R_K[f]||_1 -> 0 for a manufactured source",
          "any", check_thm12),
    Check("solver.mass_ledger", "Eq. 5.2", "mass balance of the time stepper", "nonlinear",
          check_mass_ledger),
    Check("solver.global_bound", "Theorem 5.1 (global bounded solution)",
          "(1+t)^{N/d} ||u||_inf stays in a band", "nonlinear", check_global_bound),
    Check("expansion.coefficients", "Eq. 5.5", "c_alpha(t) converges at rate A_p - |alpha|/d",
          "nonlinear", check_coefficients),
    Check("expansion.moment_identity", "Eq. 5.6", "u - U_0 has vanishing moments", "nonlinear",
          check_moment_identity),
    Check("expansion.U1_paths", "Eq. 5.7", "two algebraic forms of U_1 agree", "nonlinear",
          check_U1_paths, lambda s: s.n_levels >= 1),
    Check("thm51.U0", "Eq. 5.9", "decay of ||u - U_0||_1", "nonlinear", check_U0),
    Check("thm51.Un", "Eq. 5.9", "decay of ||u - U_n||_1, n >= 1", "nonlinear", check_Un,
          lambda s: s.n_levels >= 1),
    Check("cor51.mass", "Eq. 5.14", "decay of ||u - M g||_1", "nonlinear", check_cor51),
    Check("cor51.integrability", "Eq. 5.15", "first moments of f_M integrable, then the rate",
          "nonlinear", check_cor51_ii, lambda s: s.K >= 1),
    Check("cor52.tilde", "Eq. 5.18", "decay of ||u - u~||_1", "nonlinear", check_cor52,
          lambda s: s.K < 1),
)


class UnknownCheckError(ConfigError):
    """A scenario names a check that is not registered."""


def list_checks() -> list[Check]:
    return list(REGISTRY)


def enabled_checks(scenario: Scenario) -> list[Check]:
    wanted = scenario.checks.enabled
    if wanted is not None:
        names = {c.name for c in REGISTRY}
        unknown = [w for w in wanted if w not in names]
        if unknown:
            raise UnknownCheckError(f"unknown checks: {', '.join(unknown)}")
        return [c for c in REGISTRY if c.name in wanted and c.enabled_for(scenario)]
    return [c for c in REGISTRY if c.enabled_for(scenario)]


GUARDS = (BlowUpError, TailDominanceError, ResolutionError, TruncationError, rates.RateError)


def run_check(check: Check, ctx: RunContext) -> CheckResult:
    """Run one check; runtime guard failures become a FAIL record."""
    try:
        return check.runner(ctx)
    except GUARDS as exc:
        return CheckResult(check.name, check.anchor, None, None, FAIL,
                           {"error": type(exc).__name__, "message": str(exc)})
