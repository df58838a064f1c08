"""Scenario configuration: TOML text validated into pydantic models."""

from __future__ import annotations

import re
import sys
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field as PydField, ValidationError, model_validator

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .duhamel import NonlinearitySpec, StepControls
from .grid import Field, Grid
from .kernel import KernelSpec
from .multiindex import bracket
from . import profiles

SCENARIO_DIR = Path(__file__).parent / "scenarios"


class ConfigError(ValueError):
    """The configuration text or a field in it is invalid."""


class HypothesisError(ConfigError):
    """The scenario violates a hypothesis of the result it is meant to test."""


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class CoefficientEntry(_Model):
    alpha: list[int]
    value: float


class KernelConfig(_Model):
    family: Literal["heat", "fractional", "polyharmonic", "elliptic"] = "heat"
    dimension: Literal[1, 2] = 1
    theta: Optional[float] = None
    m: Optional[int] = None
    coefficients: Optional[list[CoefficientEntry]] = None
    spatial_decay: Optional[float] = None
    smoothness: Optional[int] = None

    @model_validator(mode="after")
    def _family_fields(self):
        if self.family == "fractional" and (self.theta is None or not 0 < self.theta < 2):
            raise ValueError("fractional kernels need theta in (0, 2)")
        if self.family == "polyharmonic" and (self.m is None or self.m < 1):
            raise ValueError("polyharmonic kernels need an integer m >= 1")
        if self.family == "elliptic" and not self.coefficients:
            raise ValueError("elliptic kernels need a coefficients list")
        return self

    def build(self) -> KernelSpec:
        N = self.dimension
        if self.family == "heat":
            kwargs = {}
            if self.spatial_decay is not None:
                kwargs["spatial_decay"] = self.spatial_decay
            if self.smoothness is not None:
                kwargs["smoothness"] = self.smoothness
            return KernelSpec.heat(N, **kwargs)
        if self.family == "fractional":
            return KernelSpec.fractional(N, self.theta)
        if self.family == "polyharmonic":
            return KernelSpec.polyharmonic(N, self.m)
        coeffs = {tuple(c.alpha): c.value for c in self.coefficients}
        return KernelSpec.elliptic(N, coeffs)


class GridConfig(_Model):
    half_extent: float = PydField(gt=0)
    points_per_axis: int = PydField(ge=8)


class ProfileConfig(_Model):
    kind: Literal["gaussian", "kernel_snapshot", "hermite_moment_free",
                  "power_tail_moment_free", "bump", "sum"]
    amplitude: float = 1.0
    center: float | list[float] = 0.0
    width: float = PydField(1.0, gt=0)
    radius: float = PydField(1.0, gt=0)
    t0: float = PydField(1.0, gt=0)
    k: Optional[int] = PydField(None, ge=0)
    eps: float = PydField(0.05, gt=0)
    terms: list["ProfileConfig"] = []

    @model_validator(mode="after")
    def _kind_fields(self):
        if self.kind in ("hermite_moment_free", "power_tail_moment_free") and self.k is None:
            raise ValueError(f"{self.kind} needs the vanishing order k")
        if self.kind == "sum" and not self.terms:
            raise ValueError("a sum profile needs at least one term")
        return self

    @property
    def moment_free_order(self) -> int | None:
        """Order up to which all moments vanish by construction, if any."""
        if self.kind in ("hermite_moment_free", "power_tail_moment_free"):
            return self.k
        if self.kind == "sum":
            orders = [t.moment_free_order for t in self.terms]
            return None if any(o is None for o in orders) else min(orders)
        return None

    def build(self, grid: Grid, spec: KernelSpec) -> Field:
        a = self.amplitude
        if self.kind == "gaussian":
            return profiles.gaussian(grid, self.center, self.width, a)
        if self.kind == "kernel_snapshot":
            return profiles.kernel_snapshot(grid, spec, self.t0, a)
        if self.kind == "hermite_moment_free":
            return profiles.hermite_moment_free(grid, self.k, self.width, a)
        if self.kind == "power_tail_moment_free":
            return profiles.power_tail_moment_free(grid, self.k, self.eps, a)
        if self.kind == "bump":
            return profiles.bump(grid, self.center, self.radius, a)
        return profiles.combine(*(t.build(grid, spec) for t in self.terms)) * a


class NonlinearityConfig(_Model):
    p: float = PydField(ge=1)
    coefficient: float = -1.0
    form: Literal["signed", "absolute"] = "signed"
    growth: float = 0.0
    profile: list[float | str] = []

    def build(self) -> NonlinearitySpec:
        return NonlinearitySpec(self.p, self.coefficient, self.form, self.growth, tuple(self.profile))


class SnapshotConfig(_Model):
    t0: float = PydField(1.0, gt=0)
    ratio: float = PydField(10 ** 0.125, gt=1)
    count: int = PydField(25, ge=2)

    def times(self) -> np.ndarray:
        return self.t0 * self.ratio ** np.arange(self.count)


class SolverConfig(_Model):
    scheme: Literal["exp-euler", "exp-trapezoid"] = "exp-trapezoid"
    dt: float = 0.05
    growth: float = 1.1
    blowup_factor: float = 1e3

    def build(self) -> StepControls:
        return StepControls(self.scheme, self.dt, self.growth, self.blowup_factor)


class ChecksConfig(_Model):
    enabled: Optional[list[str]] = None
    slope_tol: float = PydField(0.1, gt=0)
    nonlinear_slope_tol: float = PydField(0.15, gt=0)
    fit_decades: float = PydField(1.5, ge=1.5)
    export_fields: bool = True


class Scenario(_Model):
    name: str = PydField(pattern=r"^[A-Za-z0-9_.-]+$")
    description: str = ""
    K: float = PydField(ge=0)
    n_levels: int = PydField(1, ge=0, le=3)
    t_end: float = PydField(1000.0, gt=1)
    kernel: KernelConfig
    grid: GridConfig
    validation_grid: Optional[GridConfig] = None
    phi: ProfileConfig
    nonlinearity: Optional[NonlinearityConfig] = None
    snapshots: SnapshotConfig = SnapshotConfig()
    solver: SolverConfig = SolverConfig()
    checks: ChecksConfig = ChecksConfig()

    @property
    def nonlinear(self) -> bool:
        return self.nonlinearity is not None and self.nonlinearity.coefficient != 0.0

    def kernel_spec(self) -> KernelSpec:
        return self.kernel.build()

    def build_grid(self) -> Grid:
        return Grid(self.kernel.dimension, self.grid.half_extent, self.grid.points_per_axis)

    def build_validation_grid(self) -> Grid:
        """Grid for the kernel validity check; defaults to the run grid."""
        g = self.validation_grid or self.grid
        return Grid(self.kernel.dimension, g.half_extent, g.points_per_axis)

    def decay_margin(self) -> float | None:
        if not self.nonlinear:
            return None
        spec = self.kernel_spec()
        return self.nonlinearity.build().decay_margin(spec.dimension, spec.scaling_exponent)

    def snapshot_times(self) -> np.ndarray:
        times = self.snapshots.times()
        return times[times <= self.t_end * (1 + 1e-12)]

    def check_hypotheses(self) -> None:
        """Raise HypothesisError naming the first violated hypothesis."""
        spec = self.kernel_spec()
        if not self.K < spec.spatial_decay:
            raise HypothesisError(
                f"K<L (Theorem 1.1) violated: K = {self.K:g}, L = {spec.spatial_decay:g}")
        if bracket(self.K) + 1 > spec.smoothness:
            raise HypothesisError(
                f"[K]+1<=gamma (Theorem 1.1) violated: [K]+1 = {bracket(self.K) + 1}, "
                f"gamma = {spec.smoothness}")
        A_p = self.decay_margin()
        if A_p is not None and not A_p > 0:
            raise HypothesisError(f"A_p>0 (Theorem 5.1) violated: A_p = {A_p:g}")
        if len(self.snapshot_times()) < 2:
            raise ConfigError("snapshots: fewer than two snapshot times fall in [0, t_end]")


def _locate(text: str, loc: tuple) -> str:
    """Best-effort 'line N' for a pydantic error location in TOML text."""
    keys = [k for k in loc if isinstance(k, str)]
    if not keys:
        return ""
    lines = text.splitlines()
    start = 0
    for depth in range(len(keys) - 1, 0, -1):
        header = re.compile(r"^\s*\[\s*" + re.escape(".".join(keys[:depth])) + r"\s*\]")
        hit = next((i for i, ln in enumerate(lines) if header.match(ln)), None)
        if hit is not None:
            start = hit + 1
            break
    key = re.compile(r"^\s*" + re.escape(keys[-1]) + r"\s*=")
    for i in range(start, len(lines)):
        if key.match(lines[i]):
            return f"line {i + 1}: "
        if i > start and lines[i].lstrip().startswith("[") and start:
            break
    return ""


def parse_scenario(text: str, source: str = "<string>") -> Scenario:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    try:
        scenario = Scenario.model_validate(data)
    except ValidationError as exc:
        msgs = []
        for err in exc.errors():
            path = ".".join(str(p) for p in err["loc"])
            msgs.append(f"{source}: {_locate(text, err['loc'])}{path}: {err['msg']}")
        raise ConfigError("\n".join(msgs)) from exc
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    try:
        scenario.kernel_spec()
    except ValueError as exc:
        raise ConfigError(f"{source}: kernel: {exc}") from exc
    return scenario


def load_scenario(path: str | Path) -> Scenario:
    """Load a scenario from a file, or by name from the bundled set."""
    p = Path(path)
    if not p.exists():
        bundled = SCENARIO_DIR / f"{p.name}.toml"
        if p.suffix == "" and bundled.exists():
            p = bundled
        else:
            raise ConfigError(f"{path}: no such file or bundled scenario")
    return parse_scenario(p.read_text(), str(p))


def bundled_scenarios() -> list[str]:
    return sorted(p.stem for p in SCENARIO_DIR.glob("*.toml"))
