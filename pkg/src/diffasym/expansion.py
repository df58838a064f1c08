"""Asymptotic profiles of the nonlinear problem: coefficient trajectories
c_alpha(t), the profiles U_0 and U_n, the corrected profile u~, the linear
remainder v, and the table of predicted decay exponents."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .duhamel import (
    NonlinearitySpec,
    SourceHistory,
    Trajectory,
    duhamel_history,
    integrated_moments,
    remainder_RK,
)
from .grid import Field, absolute_moment
from .moments import CacheBank, compute_moments, expansion_field
from .multiindex import MultiIndex
from .semigroup import SemigroupOperator

RATE_CASES = ("theorem11", "theorem51", "cor51-i", "cor51-ii", "cor52")


@dataclass
class ExpansionState:
    K: float
    d: float
    decay_margin: float
    times: np.ndarray
    coefficients: dict  # MultiIndex -> array of c_alpha(t_j)
    limits: dict = field(default_factory=dict)
    converged: dict = field(default_factory=dict)
    tail_bounds: dict = field(default_factory=dict)
    increment_slopes: dict = field(default_factory=dict)
    corrected_mass: float | None = None

    @property
    def indices(self) -> list[MultiIndex]:
        return list(self.coefficients)

    @property
    def mass(self) -> float:
        """M, the limit of c_0(t) (estimated by its final value)."""
        zero = self.indices[0]
        limit = self.limits.get(zero)
        return float(self.coefficients[zero][-1] if limit is None else limit)

    def index(self, t: float) -> int:
        hit = np.nonzero(np.isclose(self.times, t, rtol=0, atol=1e-12))[0]
        if not len(hit):
            raise KeyError(f"t={t} outside the sampled coefficient trajectory")
        return int(hit[0])

    def at(self, t: float) -> dict:
        j = self.index(t)
        return {a: float(c[j]) for a, c in self.coefficients.items()}

    def to_json(self) -> list[dict]:
        out = []
        for a, c in self.coefficients.items():
            out.append({
                "alpha": list(a.entries),
                "c_of_t": [[float(t), float(v)] for t, v in zip(self.times, c)],
                "limit": self.limits.get(a),
                "converged": self.converged.get(a, False),
                "tail_bound": self.tail_bounds.get(a),
                "rate_fit": self.increment_slopes.get(a),
            })
        return out


def _value_at(times: np.ndarray, values: np.ndarray, t: float) -> float:
    return float(np.interp(np.log(t), np.log(times[1:]), values[1:]))


def coefficients(traj: Trajectory, phi: Field, K: float, bank: CacheBank,
                 decay_margin: float, d: float, convergence_slack: float = 0.3) -> ExpansionState:
    """c_alpha(t) = M_alpha(phi, 0) + quadrature of M_alpha(F(s), s) using the
    solver's own nodes and weights.

    A limit is reported when A_p > |alpha|/d; it is flagged converged when
    the last two dyadic increments shrink by 2^(-A_p + |alpha|/d) to within
    `convergence_slack`.
    """
    base = compute_moments(phi.at_time(0.0), bank.at(0.0), K).entries
    integrals = integrated_moments(traj.source, bank)
    times = traj.times
    coefs = {a: base[a] + integrals[a] for a in base}
    state = ExpansionState(K, d, decay_margin, times, coefs)
    t_end = float(times[-1])
    for a, c in coefs.items():
        rate = decay_margin - a.order / d
        if t_end >= 8.0:
            c1, c2, c4 = (_value_at(times, c, t_end / k) for k in (4, 2, 1))
            inc_old, inc_new = c2 - c1, c4 - c2
            if abs(inc_old) > 0 and abs(inc_new) > 0:
                state.increment_slopes[a] = float(np.log2(abs(inc_new / inc_old)))
        else:
            inc_old = inc_new = 0.0
        if rate <= 0:
            state.converged[a] = False
            continue
        state.limits[a] = float(c[-1])
        factor = 2.0 ** (-rate)
        state.tail_bounds[a] = abs(inc_new) / (2.0**rate - 1.0)
        scale = max(abs(c).max(), 1e-300)
        if abs(inc_new) <= 1e-12 * scale and abs(inc_old) <= 1e-12 * scale:
            state.converged[a] = True
        elif abs(inc_old) > 0:
            shrink = abs(inc_new / inc_old)
            state.converged[a] = bool(abs(shrink - factor) <= convergence_slack * factor
                                      or shrink < factor)
        else:
            state.converged[a] = False
    return state


def profile_U0(state: ExpansionState, bank: CacheBank, t: float) -> Field:
    """U_0(., t) = sum c_alpha(t) g_alpha(., t)."""
    return expansion_field(state.at(t), bank.at(t))


def _U0_history(state: ExpansionState, bank: CacheBank) -> list[Field]:
    return [profile_U0(state, bank, t) for t in state.times]


def _source_on(traj: Trajectory, F: NonlinearitySpec, profile: list[Field]) -> SourceHistory:
    lookup = {float(t).hex(): f for t, f in zip(traj.times, profile)}
    return traj.source.map(lambda node: F(node.time, lookup[float(node.time).hex()]))


def profile_Un(n: int, state: ExpansionState, op: SemigroupOperator, F: NonlinearitySpec,
               bank: CacheBank, traj: Trajectory) -> list[Field]:
    """U_n = U_0 + int_0^t e^{(t-s)L} P_K(s) F(s, U_{n-1}(s)) ds on the
    trajectory's step times."""
    if n < 0:
        raise ValueError("n must be non-negative")
    U0 = _U0_history(state, bank)
    current = U0
    for _ in range(n):
        remainder = remainder_RK(op, _source_on(traj, F, current), bank)
        current = [u0 + r for u0, r in zip(U0, remainder)]
    return current


def profile_Un_identity(n: int, state: ExpansionState, op: SemigroupOperator,
                        F: NonlinearitySpec, bank: CacheBank, traj: Trajectory,
                        phi: Field) -> list[Field]:
    """U_n through the moment-corrected form: the coefficients
    M_alpha(phi, 0) + int M_alpha(F(u) - F_{n-1}) times g_alpha, plus the
    plain Duhamel integral of F_{n-1}."""
    if n < 1:
        return _U0_history(state, bank)
    base = compute_moments(phi.at_time(0.0), bank.at(0.0), state.K).entries
    full = integrated_moments(traj.source, bank)
    current = _U0_history(state, bank)
    for _ in range(n):
        src = _source_on(traj, F, current)
        partial = integrated_moments(src, bank)
        plain = duhamel_history(op, src)
        nxt = []
        for j, t in enumerate(traj.times):
            coef = {a: base[a] + full[a][j] - partial[a][j] for a in base}
            nxt.append(expansion_field(coef, bank.at(t)) + plain[j])
        current = nxt
    return current


@dataclass
class TildeProfile:
    fields: list[Field]
    mass: float
    corrected_mass: float
    tail_integrand: float
    tail_slope: float | None
    truncated: bool


def profile_tilde_u(state: ExpansionState, op: SemigroupOperator, F: NonlinearitySpec,
                    traj: Trajectory, bank: CacheBank, phi: Field) -> TildeProfile:
    """u~ = M' g + int_0^t e^{(t-s)L} F(s, M g(s)) ds.

    M' = int phi + int_0^T int (f - f_M); the integral is cut at the last
    step time T and the decay of its integrand is reported with it.
    """
    if state.K >= 1:
        raise ValueError("the corrected profile u~ needs 0 <= K < 1")
    zero = MultiIndex.zero(phi.grid.dimension)
    M = state.mass
    g = {float(t).hex(): bank.at(t).field(zero) for t in traj.times}
    f_M = traj.source.map(lambda node: F(node.time, M * g[float(node.time).hex()]))
    mass_f = traj.source.integrate(lambda f, s: f.integral())
    mass_fM = f_M.integrate(lambda f, s: f.integral())
    corrected = phi.integral() + float(mass_f[-1] - mass_fM[-1])
    state.corrected_mass = corrected
    duhamel = duhamel_history(op, f_M)
    fields = [corrected * g[float(t).hex()].at_time(t) + w for t, w in zip(traj.times, duhamel)]

    # decay of s -> int (f - f_M)(s) over the last decade of nodes
    nodes = [(n.time, n.field.integral()) for step in traj.source.steps for n in step.nodes]
    nodes_M = [n.field.integral() for step in f_M.steps for n in step.nodes]
    diffs = {}
    for (s, a), b in zip(nodes, nodes_M):
        diffs[s] = abs(a - b)
    t_end = float(traj.times[-1])
    ts = np.array(sorted(s for s in diffs if s >= t_end / 10 and diffs[s] > 0))
    slope = None
    if len(ts) >= 4:
        slope = float(np.polyfit(np.log(ts), np.log([diffs[s] for s in ts]), 1)[0])
    last = diffs[max(diffs)]
    return TildeProfile(fields, M, corrected, last, slope, truncated=True)


def theorem11_remainder(op: SemigroupOperator, phi: Field, K: float, bank: CacheBank,
                        times) -> list[Field]:
    """v(t) = e^{tL} phi - sum_{|alpha| <= K} M_alpha(phi, 0) g_alpha(., t)."""
    base = compute_moments(phi.at_time(0.0), bank.at(0.0), K).entries
    out = []
    for t in times:
        evolved = op.apply(phi.at_time(0.0), t)
        out.append(evolved - expansion_field(base, bank.at(t)))
    return out


def moment_free_decay(op: SemigroupOperator, phi: Field, ell: float, times) -> np.ndarray:
    """int |x|^ell |e^{tL} phi| dx at each t."""
    return np.array([absolute_moment(op.apply(phi.at_time(0.0), t), ell) for t in times])


@dataclass(frozen=True)
class RatePrediction:
    exponent: float
    log_factor: bool
    case: str
    little_o: bool = False


def _same(a: float, b: float) -> bool:
    return math.isclose(a, b, rel_tol=1e-12, abs_tol=1e-12)


def predict_rate(K: float, d: float, decay_margin: float | None = None,
                 case: str = "theorem51", n: int = 0) -> RatePrediction:
    """Predicted decay exponent of the distance to the asymptotic profile.

    theorem11: linear remainder v; theorem51: u - U_n; cor51-i / cor51-ii:
    u - M g; cor52: u - u~.
    """
    if case not in RATE_CASES:
        raise ValueError(f"unknown case {case!r}")
    if case == "theorem11":
        return RatePrediction(-K / d, False, case, little_o=True)
    A_p = decay_margin
    if A_p is None or A_p <= 0:
        raise ValueError("the decay margin A_p must be positive")
    k_rate = K / d
    if case == "theorem51":
        other = (n + 1) * A_p
        label = f"theorem51(n={n})"
    elif case == "cor52":
        if K >= 1:
            raise ValueError("the u~ estimate needs K < 1")
        other = 2 * A_p
        label = case
    elif case == "cor51-ii":
        if K < 1:
            raise ValueError("case (ii) needs K >= 1")
        return RatePrediction(-min(1.0 / d, A_p), False, case)
    else:
        other = A_p
        label = case
        if K >= 1:
            if _same(A_p, 1.0 / d):
                return RatePrediction(-1.0 / d, True, case + ":K>=1,log")
            return RatePrediction(-min(1.0 / d, A_p), False, case + ":K>=1")
    if _same(other, k_rate):
        return RatePrediction(-k_rate, True, label + ":log")
    return RatePrediction(-min(k_rate, other), False, label, little_o=k_rate < other)
