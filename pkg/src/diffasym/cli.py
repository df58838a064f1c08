"""Command line entry point: run scenarios, list checks, validate configs."""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .checks import FAIL, INCONCLUSIVE, CheckResult, RunContext, enabled_checks, list_checks, run_check
from .duhamel import BlowUpError
from .grid import export_field_csv
from .kernel import ResolutionError, TruncationError, check_window
from .rates import verdict_table
from .scenario import ConfigError, Scenario, bundled_scenarios, load_scenario

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
OUT_ENV = "DIFFASYM_OUT"
MAX_FIELD_SNAPSHOTS = 5


@dataclass
class RunReport:
    scenario: str
    checks: list[CheckResult]
    environment: dict
    files: list[str] = field(default_factory=list)
    wall_time: float = 0.0

    def verdicts(self) -> list[str]:
        return [c.verdict for c in self.checks]

    def exit_code(self, strict: bool = False) -> int:
        bad = {FAIL, INCONCLUSIVE} if strict else {FAIL}
        return EXIT_FAIL if any(v in bad for v in self.verdicts()) else EXIT_OK

    def to_json(self) -> dict:
        # wall time is kept out so that repeated runs give identical JSON
        return {
            "scenario": self.scenario,
            "checks": [c.to_json() for c in self.checks],
            "environment": self.environment,
            "files": self.files,
        }

    def text(self) -> str:
        counts = {v: self.verdicts().count(v) for v in sorted(set(self.verdicts()))}
        lines = [f"scenario: {self.scenario}", ""]
        lines.append(verdict_table([c.row() for c in self.checks]))
        lines.append("summary: " + ", ".join(f"{k}={v}" for k, v in counts.items()))
        env = self.environment
        lines.append(f"grid: N={env['grid']['dimension']} R={env['grid']['half_extent']!r} "
                     f"n={env['grid']['points_per_axis']}")
        if env.get("steps") is not None:
            lines.append(f"solver steps: {env['steps']}")
        lines.append(f"wall time: {self.wall_time:.2f} s")
        return "\n".join(lines) + "\n"


def default_out_dir(scenario: Scenario) -> Path:
    base = os.environ.get(OUT_ENV, "diffasym_out")
    return Path(base) / scenario.name


def preflight(scenario: Scenario) -> None:
    """Hypotheses plus the spatial window at t_end; raises ConfigError."""
    scenario.check_hypotheses()
    spec, grid = scenario.kernel_spec(), scenario.build_grid()
    try:
        check_window(spec, grid, scenario.t_end + 1.0, resolution_factor=0)
    except TruncationError as exc:
        raise ConfigError(f"grid too small for t_end: {exc}") from exc


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _export_fields(ctx: RunContext, out: Path) -> list[str]:
    """A handful of evenly spaced snapshots of u, plus an index file."""
    times = ctx.sample_times
    picks = sorted(set(np.linspace(0, len(times) - 1, min(MAX_FIELD_SNAPSHOTS, len(times)))
                       .round().astype(int).tolist()))
    if ctx.scenario.nonlinear:
        fields = [ctx.trajectory.at(times[i]) for i in picks]
    else:
        fields = [ctx.linear_fields[i] for i in picks]
    names = []
    for k, f in enumerate(fields):
        name = f"fields_u_{k:03d}.csv"
        export_field_csv(f, out / name)
        names.append(name)
    index = {"times": [float(times[i]) for i in picks], "files": names}
    (out / "fields_u_index.json").write_text(_dumps(index))
    return names + ["fields_u_index.json"]


def run(scenario: Scenario, out: Path, threads: int = 1) -> RunReport:
    """Execute every enabled check of a scenario and write all artifacts."""
    start = time.perf_counter()
    preflight(scenario)
    checks = enabled_checks(scenario)
    ctx = RunContext(scenario)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda c: run_check(c, ctx), checks))
    else:
        results = [run_check(c, ctx) for c in checks]

    out.mkdir(parents=True, exist_ok=True)
    files = []
    for res in results:
        for name, text in res.artifacts.items():
            (out / name).write_text(text)
            files.append(name)
    if scenario.checks.export_fields:
        try:
            files.extend(_export_fields(ctx, out))
        except (BlowUpError, ResolutionError, TruncationError):
            pass
    env = {
        "grid": {"dimension": ctx.grid.dimension, "half_extent": ctx.grid.half_extent,
                 "points_per_axis": ctx.grid.points_per_axis},
        "kernel": {"family": ctx.spec.family, "d": ctx.d, "L": ctx.spec.spatial_decay,
                   "gamma": ctx.spec.smoothness},
        "K": scenario.K,
        "A_p": ctx.A_p,
        "steps": len(ctx.trajectory.times) - 1 if ctx.built("traj") else None,
        "version": __version__,
    }
    report = RunReport(scenario.name, results, env, sorted(files))
    report.wall_time = time.perf_counter() - start
    (out / "report.json").write_text(_dumps(report.to_json()))
    (out / "report.txt").write_text(report.text())
    return report


def _cmd_run(args) -> int:
    try:
        scenario = load_scenario(args.config)
        out = Path(args.out) if args.out else default_out_dir(scenario)
        report = run(scenario, out, args.threads)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(report.text(), end="")
    print(f"artifacts written to {out}")
    return report.exit_code(args.strict)


def _cmd_list(args) -> int:
    rows = [(c.name, c.anchor, c.mode, c.title) for c in list_checks()]
    widths = [max(len(r[i]) for r in rows) for i in range(3)]
    for r in rows:
        print("  ".join(x.ljust(w) for x, w in zip(r[:3], widths)) + "  " + r[3])
    return EXIT_OK


def _cmd_validate(args) -> int:
    try:
        scenario = load_scenario(args.config)
        preflight(scenario)
        names = [c.name for c in enabled_checks(scenario)]
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"{scenario.name}: ok ({len(names)} checks enabled)")
    for n in names:
        print(f"  {n}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diffasym",
        description="Numerical checks of asymptotic expansions for diffusion equations.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a scenario and write the report")
    p.add_argument("config", help="scenario TOML file or bundled scenario name")
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV}/<name>)")
    p.add_argument("--strict", action="store_true", help="treat INCONCLUSIVE as failure")
    p.add_argument("--threads", type=int, default=1, help="checks run concurrently")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("list-checks", help="list the available checks")
    p.set_defaults(func=_cmd_list)

    p = sub.add_parser("validate", help="parse a scenario and check its hypotheses")
    p.add_argument("config")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("scenarios", help="list bundled scenarios")
    p.set_defaults(func=lambda a: print("\n".join(bundled_scenarios())) or EXIT_OK)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
