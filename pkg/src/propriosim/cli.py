"""Batch runner CLI: run scenarios, validate them, and sweep one parameter.

Exit codes: 0 success, 2 parse/validation problems, 3 runtime simulation
errors. All output files are written atomically (temp file + rename).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import statistics
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from .episode import TRAJECTORY_COLUMNS, EpisodeResult, run_episode
from .scenario import (
    ParseError,
    Scenario,
    ValidationError,
    build_scenario,
    build_world,
    builtin_scenario_path,
    list_builtin_scenarios,
    load_scenario,
    parse_scenario_text,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


@dataclass
class BatchReport:
    scenario_name: str
    replicates: int
    seed_base: int
    episodes: list[EpisodeResult]

    @property
    def success_rate(self) -> float:
        return sum(e.success for e in self.episodes) / len(self.episodes)

    def _median(self, values) -> float | None:
        values = [v for v in values if v is not None]
        return float(statistics.median(values)) if values else None

    def aggregates(self) -> dict:
        return {
            "success_rate": self.success_rate,
            "median_axis_direction_error": self._median(
                e.axis_direction_error for e in self.episodes
            ),
            "median_axis_position_error": self._median(
                e.axis_position_error for e in self.episodes
            ),
            "median_steps": self._median(e.steps for e in self.episodes),
            "median_sim_time": self._median(e.sim_time for e in self.episodes),
        }

    def to_json_dict(self) -> dict:
        return {
            "scenario": self.scenario_name,
            "replicates": self.replicates,
            "seed_base": self.seed_base,
            "aggregates": self.aggregates(),
            "episodes": [
                _episode_json(e, self.seed_base + i) for i, e in enumerate(self.episodes)
            ],
        }


def _episode_json(e: EpisodeResult, seed: int) -> dict:
    # wall_time is intentionally not serialized: metrics files must be
    # byte-identical across reruns of the same seeds
    return {
        "seed": seed,
        "success": e.success,
        "final_q_fraction": e.final_q_fraction,
        "steps": e.steps,
        "sim_time": e.sim_time,
        "estimates": [
            {
                "twist": [float(x) for x in est.twist.as_array()],
                "joint_type": est.joint_type,
                "residual_rms": est.residual_rms,
                "converged": est.converged,
                "n_poses": len(est.configurations),
                "q_last": float(est.configurations[-1]),
            }
            for est in e.estimates
        ],
        "axis_direction_error": e.axis_direction_error,
        "axis_position_error": e.axis_position_error,
        "peak_force": e.peak_force,
        "accumulated_slip_angle": e.accumulated_slip_angle,
        "failure_reason": e.failure_reason,
    }


def run_batch(
    scenario: Scenario,
    record_trajectories: bool = False,
    workers: int = 1,
) -> BatchReport:
    """Run scenario.replicates episodes with seeds seed_base + i."""

    def run_one(i: int) -> EpisodeResult:
        world = build_world(scenario)
        cfg = replace(scenario.runner, seed=scenario.seed_base + i)
        return run_episode(world, scenario.controller, cfg, record_trajectory=record_trajectories)

    indices = range(scenario.replicates)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            episodes = list(pool.map(run_one, indices))
    else:
        episodes = [run_one(i) for i in indices]
    return BatchReport(scenario.name, scenario.replicates, scenario.seed_base, episodes)


def atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_metrics(report: BatchReport, path: Path) -> None:
    atomic_write_text(path, json.dumps(report.to_json_dict(), indent=2) + "\n")


def write_trajectory(rows: list[list[float]], path: Path) -> None:
    import io

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRAJECTORY_COLUMNS)
    writer.writerows(rows)
    atomic_write_text(path, buf.getvalue())


def _resolve_scenario_arg(arg: str) -> Path:
    p = Path(arg)
    if p.exists():
        return p
    try:
        builtin = builtin_scenario_path(arg)
    except Exception:
        builtin = None
    if builtin is not None and builtin.exists():
        return builtin
    raise FileNotFoundError(
        f"no scenario file {arg!r} (builtins: {', '.join(list_builtin_scenarios())})"
    )


def _load(arg: str, overrides: dict | None = None) -> Scenario:
    path = _resolve_scenario_arg(arg)
    if overrides:
        values = parse_scenario_text(path.read_text())
        values.update(overrides)
        return build_scenario(values, name_fallback=path.stem)
    return load_scenario(path)


def _print_report(report: BatchReport) -> None:
    agg = report.aggregates()
    print(f"scenario: {report.scenario_name}")
    print(f"episodes: {report.replicates}  success_rate: {agg['success_rate']:.3f}")
    for key in ("median_axis_direction_error", "median_axis_position_error", "median_steps", "median_sim_time"):
        print(f"{key}: {agg[key]}")
    for i, e in enumerate(report.episodes):
        status = "ok" if e.success else (e.failure_reason or "failed")
        print(
            f"  episode {i}: {status:>18}  q_fraction={e.final_q_fraction:7.3f}"
            f"  steps={e.steps:4d}  peak_force={e.peak_force:6.2f} N"
            f"  slip={e.accumulated_slip_angle:6.4f} rad"
        )


def _cmd_run(args) -> int:
    scenario = _load(args.scenario)
    if args.replicates is not None:
        scenario = replace(scenario, replicates=args.replicates)
    if args.seed is not None:
        scenario = replace(scenario, seed_base=args.seed)
    report = run_batch(scenario, record_trajectories=args.traj, workers=args.workers)
    _print_report(report)
    if args.out:
        out = Path(args.out)
        write_metrics(report, out / "metrics.json")
        if args.traj:
            for i, e in enumerate(report.episodes):
                write_trajectory(e.trajectory, out / f"trajectory_{i:03d}.csv")
        print(f"wrote {out / 'metrics.json'}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    scenario = _load(args.scenario)
    print(f"OK: {scenario.name} ({scenario.joint.joint_type} joint, "
          f"{scenario.replicates} replicate(s), target_q={scenario.runner.target_q:.4g})")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    path = _resolve_scenario_arg(args.scenario)
    base_values = parse_scenario_text(path.read_text())
    results = []
    for raw in args.values:
        value = _parse_cli_value(raw)
        overrides = dict(base_values)
        overrides[args.param] = value
        scenario = build_scenario(overrides, name_fallback=path.stem)
        if args.replicates is not None:
            scenario = replace(scenario, replicates=args.replicates)
        if args.seed is not None:
            scenario = replace(scenario, seed_base=args.seed)
        report = run_batch(scenario, workers=args.workers)
        agg = report.aggregates()
        print(f"{args.param} = {raw}: success_rate={agg['success_rate']:.3f}")
        results.append({"value": value, "report": report.to_json_dict()})
    if args.out:
        out = Path(args.out)
        doc = {"scenario": path.stem, "param": args.param, "points": results}
        atomic_write_text(out / "sweep.json", json.dumps(doc, indent=2) + "\n")
        print(f"wrote {out / 'sweep.json'}")
    return EXIT_OK


def _parse_cli_value(raw: str):
    from .scenario import _parse_value  # same grammar as scenario files

    return _parse_value(raw.strip(), 0, 0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="propriosim",
        description="Articulated-object opening simulator: batch episode runner.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario batch and report metrics")
    run.add_argument("scenario", help="scenario file path or builtin name")
    run.add_argument("--out", help="directory for metrics.json (and trajectories)")
    run.add_argument("--replicates", type=int, default=None)
    run.add_argument("--seed", type=int, default=None, help="override seed_base")
    run.add_argument("--traj", action="store_true", help="also write per-episode CSVs")
    run.add_argument("--workers", type=int, default=1)
    run.set_defaults(func=_cmd_run)

    val = sub.add_parser("validate", help="check a scenario file")
    val.add_argument("scenario")
    val.set_defaults(func=_cmd_validate)

    sweep = sub.add_parser("sweep", help="1-D parameter sweep over a scenario key")
    sweep.add_argument("scenario")
    sweep.add_argument("--param", required=True, help="scenario key to vary")
    sweep.add_argument("--values", nargs="+", required=True)
    sweep.add_argument("--out")
    sweep.add_argument("--replicates", type=int, default=None)
    sweep.add_argument("--seed", type=int, default=None)
    sweep.add_argument("--workers", type=int, default=1)
    sweep.set_defaults(func=_cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ValidationError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # simulation blow-ups, IO failures
        print(f"runtime error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
