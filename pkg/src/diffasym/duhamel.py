"""Exponential time stepping for u = e^{tL} phi + int_0^t e^{(t-s)L} F(s, u(s)) ds,
the Duhamel accumulator, and the projected remainder R_K."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .grid import Field, Grid, export_field_csv, lq_norm
from .moments import CacheBank, compute_moments, expansion_field, project
from .semigroup import SemigroupOperator

SCHEMES = ("exp-euler", "exp-trapezoid")


class BlowUpError(RuntimeError):
    """Solution left the configured bound; the small-data hypothesis fails."""


@dataclass(frozen=True)
class NonlinearitySpec:
    """F(x, t, u) = coefficient (1+t)^growth a0(x) N(u) with N(u) = |u|^(p-1) u
    ("signed") or |u|^p ("absolute").

    `profile` selects a0: () for a0 = 1, ("tanh", amplitude, width) for
    1 + amplitude tanh(x_1/width), ("gaussian", width) for exp(-|x|^2/width^2).
    """

    p: float
    coefficient: float = -1.0
    form: str = "signed"
    growth: float = 0.0
    profile: tuple = ()
    lipschitz_scale: float | None = None

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("p must be >= 1")
        if self.form not in ("signed", "absolute"):
            raise ValueError(f"unknown nonlinearity form {self.form!r}")

    @classmethod
    def zero(cls) -> "NonlinearitySpec":
        return cls(p=1.0, coefficient=0.0)

    @property
    def is_zero(self) -> bool:
        return self.coefficient == 0.0

    def decay_margin(self, dimension: int, d: float) -> float:
        """A_p = -A + N(p-1)/d - 1."""
        return -self.growth + dimension * (self.p - 1.0) / d - 1.0

    def spatial_factor(self, grid: Grid) -> np.ndarray | float:
        if not self.profile:
            return 1.0
        kind = self.profile[0]
        if kind == "tanh":
            amplitude, width = self.profile[1:]
            return 1.0 + amplitude * np.tanh(grid.coords[0] / width)
        if kind == "gaussian":
            (width,) = self.profile[1:]
            return np.exp(-grid.radius**2 / width**2)
        raise ValueError(f"unknown coefficient profile {kind!r}")

    def evaluate(self, t: float, u: Field) -> Field:
        if self.is_zero:
            return u.with_values(np.zeros(u.grid.shape), time=t)
        v = u.values
        if self.form == "signed":
            core = np.abs(v) ** (self.p - 1.0) * v
        else:
            core = np.abs(v) ** self.p
        scale = self.coefficient * (1.0 + t) ** self.growth
        return Field(u.grid, scale * self.spatial_factor(u.grid) * core, t)

    __call__ = evaluate


@dataclass(frozen=True)
class StepControls:
    scheme: str = "exp-trapezoid"
    dt: float = 0.05
    growth: float = 1.1
    blowup_factor: float = 1e3

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not 1.0 < self.growth <= 1.2:
            raise ValueError("geometric growth factor must lie in (1, 1.2]")
        if self.dt <= 0 or self.dt > 1:
            raise ValueError("dt must lie in (0, 1]")


def time_grid(t_end: float, dt: float, growth: float, extra=()) -> np.ndarray:
    """Uniform steps of dt on [0, 1], then t -> growth * t up to t_end."""
    pts = list(np.arange(0.0, min(1.0, t_end), dt))
    t = 1.0
    while t < t_end:
        pts.append(t)
        t *= growth
    pts.append(float(t_end))
    pts.extend(float(s) for s in extra if 0 < s < t_end)
    pts = np.unique(np.round(np.array(pts, dtype=float), 12))
    return pts


@dataclass
class QuadratureNode:
    time: float
    weight: float
    field: Field


@dataclass
class Step:
    start: float
    end: float
    nodes: list[QuadratureNode]


@dataclass
class SourceHistory:
    """Source samples f(s) with the quadrature weights of one time rule."""

    steps: list[Step]
    scheme: str

    @property
    def times(self) -> np.ndarray:
        return np.array([self.steps[0].start] + [s.end for s in self.steps])

    @classmethod
    def from_function(cls, times, fn: Callable[[float], Field], scheme: str) -> "SourceHistory":
        times = np.asarray(times, dtype=float)
        steps = []
        cache: dict[float, Field] = {}

        def sample(t):
            if t not in cache:
                cache[t] = fn(t).at_time(t)
            return cache[t]

        for t0, t1 in zip(times[:-1], times[1:]):
            dt = t1 - t0
            if scheme == "exp-euler":
                nodes = [QuadratureNode(t0, dt, sample(t0))]
            elif scheme == "exp-trapezoid":
                nodes = [QuadratureNode(t0, dt / 2, sample(t0)),
                         QuadratureNode(t1, dt / 2, sample(t1))]
            else:
                raise ValueError(f"unknown scheme {scheme!r}")
            steps.append(Step(float(t0), float(t1), nodes))
        return cls(steps, scheme)

    def map(self, fn: Callable[[QuadratureNode], Field]) -> "SourceHistory":
        """Same nodes and weights, fields replaced by fn(node)."""
        done: dict[int, Field] = {}
        steps = []
        for step in self.steps:
            nodes = []
            for node in step.nodes:
                key = id(node.field)
                if key not in done:
                    done[key] = fn(node).at_time(node.time)
                nodes.append(QuadratureNode(node.time, node.weight, done[key]))
            steps.append(Step(step.start, step.end, nodes))
        return SourceHistory(steps, self.scheme)

    def integrate(self, fn: Callable[[Field, float], float]) -> np.ndarray:
        """Cumulative quadrature of s -> fn(f(s), s) at every step end (0 at start)."""
        out = [0.0]
        for step in self.steps:
            out.append(out[-1] + sum(n.weight * fn(n.field, n.time) for n in step.nodes))
        return np.array(out)


def duhamel_history(op: SemigroupOperator, source: SourceHistory) -> list[Field]:
    """int_0^t e^{(t-s)L} f(s) ds at every step time of the source."""
    first = source.steps[0]
    acc = op.grid.zeros(first.start)
    out = [acc]
    for step in source.steps:
        dt = step.end - step.start
        values = np.fft.fftn(acc.values) * op.multiplier(dt)
        for node in step.nodes:
            lag = step.end - node.time
            values = values + node.weight * np.fft.fftn(node.field.values) * op.multiplier(lag)
        acc = Field(op.grid, np.real(np.fft.ifftn(values)), step.end)
        out.append(acc)
    return out


def duhamel_accumulate(op: SemigroupOperator, source: SourceHistory,
                       t_end: float | None = None) -> Field:
    if not source.steps:
        raise ValueError("empty source history")
    history = duhamel_history(op, source)
    if t_end is None:
        return history[-1]
    times = source.times
    hit = np.nonzero(np.isclose(times, t_end, rtol=0, atol=1e-12))[0]
    if not len(hit):
        raise ValueError(f"t_end={t_end} is not a step time of the source")
    return history[hit[0]]


def project_source(source: SourceHistory, bank: CacheBank) -> SourceHistory:
    def proj(node):
        cache = bank.at(node.time)
        return project(node.field, compute_moments(node.field, cache), cache)

    return source.map(proj)


def remainder_RK(op: SemigroupOperator, source: SourceHistory, bank: CacheBank) -> list[Field]:
    """R_K[f](t) = int_0^t e^{(t-s)L} P_K(s) f(s) ds at every step time."""
    return duhamel_history(op, project_source(source, bank))


def integrated_moments(source: SourceHistory, bank: CacheBank) -> dict:
    """alpha -> cumulative quadrature of M_alpha(f(s), s) at every step time."""
    per_node: dict[int, dict] = {}

    def moment(f, s, alpha):
        key = id(f)
        if key not in per_node:
            per_node[key] = compute_moments(f, bank.at(s)).entries
        return per_node[key][alpha]

    indices = bank.at(source.steps[0].start).indices
    return {a: source.integrate(lambda f, s, a=a: moment(f, s, a)) for a in indices}


def remainder_RK_identity(op: SemigroupOperator, source: SourceHistory,
                          bank: CacheBank) -> list[Field]:
    """Same remainder via the plain Duhamel integral minus the integrated
    moments times g_alpha(., t)."""
    plain = duhamel_history(op, source)
    integrals = integrated_moments(source, bank)
    out = []
    for j, f in enumerate(plain):
        coef = {a: c[j] for a, c in integrals.items()}
        out.append(f - expansion_field(coef, bank.at(f.time)))
    return out


@dataclass
class Trajectory:
    times: np.ndarray
    fields: list[Field]
    source: SourceHistory
    controls: StepControls
    snapshot_times: list[float] = field(default_factory=list)

    @property
    def scheme(self) -> str:
        return self.controls.scheme

    def index(self, t: float) -> int:
        hit = np.nonzero(np.isclose(self.times, t, rtol=0, atol=1e-12))[0]
        if not len(hit):
            raise KeyError(f"t={t} is not a step time of the trajectory")
        return int(hit[0])

    def at(self, t: float) -> Field:
        return self.fields[self.index(t)]

    def mass_ledger(self) -> float:
        """int u(t_end) - int phi - quadrature of int int F."""
        source_mass = self.source.integrate(lambda f, s: f.integral())[-1]
        return self.fields[-1].integral() - self.fields[0].integral() - source_mass

    def export(self, directory: str | Path, prefix: str = "u") -> list[Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        written = []
        snaps = self.snapshot_times or [float(self.times[-1])]
        for k, t in enumerate(snaps):
            path = directory / f"fields_{prefix}_{k:03d}.csv"
            export_field_csv(self.at(t), path)
            written.append(path)
        index = {
            "times": [float(t) for t in snaps],
            "files": [p.name for p in written],
            "scheme": self.scheme,
            "steps": len(self.times) - 1,
            "dt": self.controls.dt,
            "growth": self.controls.growth,
        }
        path = directory / f"fields_{prefix}_index.json"
        path.write_text(json.dumps(index, indent=2))
        written.append(path)
        return written


def solve(op: SemigroupOperator, phi: Field, F: NonlinearitySpec, t_end: float,
          controls: StepControls = StepControls(), snapshots=(),
          times=None) -> Trajectory:
    """Exponential Euler or exponential trapezoid (Euler predictor, one
    corrector) on the uniform-then-geometric time grid."""
    op.check_spread(t_end)
    if times is None:
        times = time_grid(t_end, controls.dt, controls.growth, snapshots)
    times = np.asarray(times, dtype=float)
    bound = controls.blowup_factor * max(lq_norm(phi, math.inf), np.finfo(float).tiny)
    u = phi.at_time(float(times[0]))
    fields = [u]
    steps = []
    for t0, t1 in zip(times[:-1], times[1:]):
        dt = t1 - t0
        f0 = F(t0, u)
        if controls.scheme == "exp-euler":
            u_next = op.apply(u + dt * f0, dt)
            nodes = [QuadratureNode(t0, dt, f0)]
        else:
            predictor = op.apply(u + dt * f0, dt)
            f1 = F(t1, predictor)
            u_next = op.apply(u + (dt / 2) * f0, dt) + (dt / 2) * f1.values
            nodes = [QuadratureNode(t0, dt / 2, f0), QuadratureNode(t1, dt / 2, f1)]
        u = u_next.at_time(float(t1))
        peak = lq_norm(u, math.inf)
        if peak > bound:
            raise BlowUpError(
                f"||u||_inf = {peak:.3e} at t = {t1:g} exceeds bound {bound:.3e}; "
                "initial data too large for a global bounded solution")
        fields.append(u)
        steps.append(Step(float(t0), float(t1), nodes))
    snaps = [float(s) for s in snapshots if times[0] <= s <= times[-1]]
    return Trajectory(times, fields, SourceHistory(steps, controls.scheme), controls, snaps)


def solution_bound_band(traj: Trajectory, d: float, q: float = math.inf,
                        t_min: float = 1.0) -> float:
    """max/min over t >= t_min of (1+t)^((N/d)(1-1/q)) ||u(t)||_q."""
    n = traj.fields[0].grid.dimension
    inv_q = 0.0 if math.isinf(q) else 1.0 / q
    vals = [(1 + t) ** ((n / d) * (1 - inv_q)) * lq_norm(f, q)
            for t, f in zip(traj.times, traj.fields) if t >= t_min]
    vals = np.array(vals)
    if not len(vals) or vals.min() == 0:
        return math.inf
    return float(vals.max() / vals.min())
