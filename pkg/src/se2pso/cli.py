"""Command line entry point: ``se2pso plan|simulate|bench|validate``.

A scenario argument is either a path to a YAML file or the name of one of
the bundled scenarios (``straight_empty``, ``turn_blocked``, ...).

Exit codes: 0 success, 2 invalid scenario or arguments, 3 planning failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ParseError, PlanningFailure, ValidationError
from .replanner import plan_once, run_simulation, write_plan, write_simulation
from .scenario import Scenario, load_scenario, parse_scenario

EXIT_OK, EXIT_INVALID, EXIT_PLANNING = 0, 2, 3


def bundled_scenarios() -> list[str]:
    root = resources.files("se2pso") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def resolve_scenario(arg: str) -> Scenario:
    path = Path(arg)
    if path.exists():
        return load_scenario(path)
    res = resources.files("se2pso") / "scenarios" / f"{arg}.yaml"
    if res.is_file():
        return parse_scenario(res.read_text(), name=arg)
    raise ParseError(f"no scenario file or bundled scenario named '{arg}' "
                     f"(bundled: {', '.join(bundled_scenarios())})")


def _configure(sc: Scenario, args) -> Scenario:
    swarm = {}
    if getattr(args, "seed", None) is not None:
        swarm["seed"] = args.seed
    if getattr(args, "threads", None) is not None:
        swarm["threads"] = args.threads
    if swarm:
        sc = sc.with_swarm(**swarm)
    cycle = sc.planner.cycle
    if getattr(args, "rate", None) is not None:
        if not args.rate > 0:
            raise ValidationError("--rate must be positive")
        cycle = replace(cycle, replan_period=1.0 / args.rate)
    if getattr(args, "duration", None) is not None:
        cycle = replace(cycle, sim_duration=args.duration)
    if cycle is not sc.planner.cycle:
        sc = sc.with_planner(cycle=cycle)
    return sc


def cmd_validate(args) -> int:
    sc = resolve_scenario(args.scenario)
    p = sc.planner
    print(f"{sc.name}: ok ({len(sc.static_obstacles)} static, {len(sc.dynamic)} dynamic obstacles, "
          f"{p.swarm.n_particles} particles, horizon {p.horizon_steps} x {p.dt} s)")
    return EXIT_OK


def cmd_plan(args) -> int:
    sc = _configure(resolve_scenario(args.scenario), args)
    res = plan_once(sc)
    if args.out:
        write_plan(res, Path(args.out))
    print(f"{sc.name}: total cost {res.costs.total:.6g}, "
          f"{res.stats.valid_after_optimization}/{sc.planner.swarm.n_particles} valid, "
          f"{res.stats.iterations} iterations ({res.stats.termination}), "
          f"{res.wall_time * 1e3:.1f} ms")
    return EXIT_OK


def cmd_simulate(args) -> int:
    sc = _configure(resolve_scenario(args.scenario), args)
    failure = None
    try:
        results = run_simulation(sc)
    except PlanningFailure as exc:
        failure, results = exc, exc.results
    if args.out:
        write_simulation(results, Path(args.out), failure)
    if failure is not None:
        print(f"{sc.name}: {failure}", file=sys.stderr)
        return EXIT_PLANNING
    valid = [r.stats.valid_after_optimization for r in results]
    print(f"{sc.name}: {len(results)} cycles, min valid {min(valid, default=0)}, "
          f"median {np.median([r.wall_time for r in results]) * 1e3 if results else 0:.1f} ms/cycle")
    return EXIT_OK


def cmd_bench(args) -> int:
    sc = _configure(resolve_scenario(args.scenario), args)
    period = sc.planner.cycle.replan_period
    sc = sc.with_planner(cycle=replace(sc.planner.cycle, sim_duration=args.cycles * period))
    results = run_simulation(sc)
    ms = np.array([r.wall_time * 1e3 for r in results])
    print(f"{sc.name}: {len(ms)} cycles, threads {sc.planner.swarm.threads}")
    print(f"median {np.median(ms):.2f} ms  p95 {np.percentile(ms, 95):.2f} ms  max {ms.max():.2f} ms")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="se2pso", description="Particle swarm trajectory planner.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="run one planning cycle")
    p.add_argument("scenario")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--out", help="directory for trajectory, cost and stats files")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("simulate", help="run the closed replanning loop")
    p.add_argument("scenario")
    p.add_argument("--duration", type=float, help="simulated seconds")
    p.add_argument("--rate", type=float, help="replanning rate in Hz (default 10)")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="time planning cycles")
    p.add_argument("scenario")
    p.add_argument("--cycles", type=int, default=50)
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("validate", help="parse and check a scenario")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except PlanningFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PLANNING


if __name__ == "__main__":
    sys.exit(main())
