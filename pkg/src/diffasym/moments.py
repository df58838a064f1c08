"""Expansion coefficients M_alpha(f, t) against the basis g_alpha(., t), the
projection P_K(t), the weighted functional E_{K,q}, and report helpers for
the moment identities."""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass, field

import numpy as np

from .grid import Field, Grid, GridError, lq_norm, monomial_moment, weighted_l1_norm
from .kernel import KernelSpec, g_alpha_field
from .multiindex import MultiIndex, bracket, enumerate_indices, leq
from .semigroup import SemigroupOperator


@dataclass(frozen=True, eq=False)
class KernelMomentCache:
    """Integrals of x^alpha g_beta(x, t) for beta <= alpha in M_K, plus the
    basis fields g_alpha(., t) themselves."""

    spec: KernelSpec
    grid: Grid
    K: float
    time: float
    indices: tuple[MultiIndex, ...]
    integrals: dict
    fields: dict

    def integral(self, alpha: MultiIndex, beta: MultiIndex) -> float:
        if not leq(beta, alpha):
            return 0.0
        return self.integrals[(alpha, beta)]

    def field(self, alpha: MultiIndex) -> Field:
        return self.fields[alpha]


def heat_gaussian_moment(alpha: MultiIndex, beta: MultiIndex, t: float) -> float:
    """Closed form of the x^alpha moment of g_beta(., t) for the heat kernel.

    Per axis, integrating by parts beta_i times turns the moment into
    C(alpha_i, beta_i) times the (alpha_i - beta_i)-th Gaussian moment of
    variance 2(t + 1).
    """
    if not leq(beta, alpha):
        return 0.0
    var = 2.0 * (t + 1.0)
    out = 1.0
    for a, b in zip(alpha.entries, beta.entries):
        k = a - b
        if k % 2:
            return 0.0
        # E[X^k] for centred normal: (k-1)!! var^(k/2)
        out *= math.comb(a, b) * _double_factorial(k - 1) * var ** (k // 2)
    return out


def _double_factorial(n: int) -> int:
    return 1 if n <= 0 else n * _double_factorial(n - 2)


def kernel_moments(spec: KernelSpec, grid: Grid, K: float, t: float,
                   closed_form: bool = False) -> KernelMomentCache:
    if bracket(K) > spec.smoothness:
        raise ValueError(f"[K] = {bracket(K)} exceeds kernel smoothness {spec.smoothness}")
    if closed_form and spec.family != "heat":
        raise ValueError("closed-form kernel moments exist only for the heat kernel")
    indices = tuple(enumerate_indices(spec.dimension, K))
    fields = {a: g_alpha_field(spec, grid, a, t) for a in indices}
    integrals = {}
    for alpha in indices:
        for beta in indices:
            if leq(beta, alpha):
                if closed_form:
                    integrals[(alpha, beta)] = heat_gaussian_moment(alpha, beta, t)
                else:
                    integrals[(alpha, beta)] = monomial_moment(fields[beta], alpha)
    return KernelMomentCache(spec, grid, K, float(t), indices, integrals, fields)


class CacheBank:
    """KernelMomentCache instances for one (kernel, grid, K), keyed by time."""

    def __init__(self, spec: KernelSpec, grid: Grid, K: float):
        self.spec, self.grid, self.K = spec, grid, K
        self._caches: dict[str, KernelMomentCache] = {}
        self._lock = threading.Lock()

    def at(self, t: float) -> KernelMomentCache:
        key = float(t).hex()
        cache = self._caches.get(key)
        if cache is None:
            cache = kernel_moments(self.spec, self.grid, self.K, t)
            with self._lock:
                cache = self._caches.setdefault(key, cache)
        return cache


@dataclass
class MomentTable:
    K: float
    time: float
    entries: dict  # MultiIndex -> float, canonical order

    def __getitem__(self, alpha: MultiIndex) -> float:
        return self.entries[alpha]

    def values(self) -> np.ndarray:
        return np.array(list(self.entries.values()))

    def to_json(self) -> list[dict]:
        return [{"alpha": list(a.entries), "value": v, "t": self.time, "K": self.K}
                for a, v in self.entries.items()]

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


def compute_moments(f: Field, cache: KernelMomentCache, K: float | None = None) -> MomentTable:
    """Fill M_alpha(f, t) in ascending order of |alpha|."""
    if f.grid != cache.grid:
        raise GridError("field and kernel-moment cache use different grids")
    K = cache.K if K is None else K
    if bracket(K) > bracket(cache.K):
        raise ValueError("requested K exceeds the cache's K")
    entries: dict = {}
    for alpha in cache.indices:
        if alpha.order > bracket(K):
            break
        value = monomial_moment(f, alpha)
        for beta, m_beta in entries.items():
            if beta != alpha and leq(beta, alpha):
                value -= m_beta * cache.integral(alpha, beta)
        entries[alpha] = value
    return MomentTable(K, cache.time, entries)


def project(f: Field, table: MomentTable, cache: KernelMomentCache) -> Field:
    """P_K(t) f = f - sum M_alpha(f, t) g_alpha(., t)."""
    if table.time != cache.time:
        raise ValueError("moment table and cache were computed at different times")
    if f.grid != cache.grid:
        raise GridError("field and cache use different grids")
    values = np.array(f.values)
    for alpha, m in table.entries.items():
        values -= m * cache.field(alpha).values
    return f.with_values(values)


def expansion_field(coefficients: dict, cache: KernelMomentCache, time: float | None = None) -> Field:
    """sum c_alpha g_alpha(., t) over the supplied coefficients."""
    values = np.zeros(cache.grid.shape)
    for alpha, c in coefficients.items():
        values += c * cache.field(alpha).values
    return Field(cache.grid, values, cache.time if time is None else time)


def e_functional(f: Field, q: float, K: float, d: float, time: float | None = None) -> float:
    """(1+t)^(K/d) [t^((N/d)(1-1/q)) ||f||_q + ||f||_1] + |||f|||_K."""
    t = f.time if time is None else time
    n = f.grid.dimension
    inv_q = 0.0 if math.isinf(q) else 1.0 / q
    if q > 1 and t == 0:
        raise ValueError("E_{K,q} with q > 1 needs t > 0")
    scaled = t ** ((n / d) * (1.0 - inv_q)) * lq_norm(f, q) if q > 1 else lq_norm(f, 1)
    return (1.0 + t) ** (K / d) * (scaled + lq_norm(f, 1)) + weighted_l1_norm(f, K)


def raw_moments(f: Field, K: float) -> dict:
    return {a: monomial_moment(f, a) for a in enumerate_indices(f.grid.dimension, K)}


@dataclass
class Lemma21Report:
    conservation: float
    vanishing: float | None
    per_time: list = field(default_factory=list)


def verify_lemma21(op: SemigroupOperator, f: Field, K: float, times) -> Lemma21Report:
    """Max over times and alpha of |M_alpha(e^{tL} f, t) - M_alpha(f, 0)|;
    if f has vanishing moments up to K, also the max |moment| of e^{tL} f."""
    bank = CacheBank(op.spec, op.grid, K)
    base = compute_moments(f.at_time(0.0), bank.at(0.0))
    scale = 1.0 + weighted_l1_norm(f, K)
    moment_free = all(abs(v) <= 1e-10 * scale for v in raw_moments(f, K).values())
    worst = 0.0
    vanish = 0.0 if moment_free else None
    per_time = []
    for t in times:
        evolved = op.apply(f.at_time(0.0), t)
        table = compute_moments(evolved, bank.at(t))
        err = float(np.max(np.abs(table.values() - base.values())))
        worst = max(worst, err)
        row = {"t": float(t), "conservation": err}
        if moment_free:
            v = max(abs(m) for m in raw_moments(evolved, K).values())
            vanish = max(vanish, v)
            row["vanishing"] = v
        per_time.append(row)
    return Lemma21Report(worst, vanish, per_time)


@dataclass
class Lemma22Report:
    """Largest ratio of each estimate's left side to its E_{K,q} bound."""

    lq_bound: float  # ||f||_r with r in {1, q}
    weighted_bound: float
    moment_bound: float
    projection_bound: float


def verify_lemma22(trajectory, spec: KernelSpec, q: float, K: float, ell: float,
                   bank: CacheBank | None = None) -> Lemma22Report:
    if ell > K:
        raise ValueError("need ell <= K")
    d = spec.scaling_exponent
    n = spec.dimension
    inv_q = 0.0 if math.isinf(q) else 1.0 / q
    ratios = {"lq": 0.0, "w": 0.0, "m": 0.0, "p": 0.0}
    for f in trajectory:
        t = f.time
        if t <= 0:
            continue
        e = e_functional(f, q, K, d)
        if e == 0.0:
            continue
        if bank is None:
            bank = CacheBank(spec, f.grid, K)
        cache = bank.at(t)
        table = compute_moments(f, cache)
        pf = project(f, table, cache)
        for r in {1.0, q}:
            inv_r = 0.0 if math.isinf(r) else 1.0 / r
            lhs = lq_norm(f, r) * t ** ((n / d) * (1 - inv_r)) * (1 + t) ** (K / d)
            ratios["lq"] = max(ratios["lq"], lhs / e)
        ratios["w"] = max(ratios["w"], weighted_l1_norm(f, ell) * (1 + t) ** ((K - ell) / d) / e)
        for alpha, m in table.entries.items():
            ratios["m"] = max(ratios["m"], abs(m) * (1 + t) ** ((K - alpha.order) / d) / e)
        lhs = (t ** ((n / d) * (1 - inv_q)) * lq_norm(pf, q)
               + (1 + t) ** (-ell / d) * weighted_l1_norm(pf, ell))
        ratios["p"] = max(ratios["p"], lhs * (1 + t) ** (K / d) / e)
    return Lemma22Report(ratios["lq"], ratios["w"], ratios["m"], ratios["p"])
