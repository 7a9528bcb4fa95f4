"""Continuous replanning loop with perfect ego tracking, plus result writers.

Cycle ``k`` starts at ``now = k * replan_period``. The ego sits on the
previous plan at ``now``; the new template keeps every previous pose up to
``now + replan_period + pipeline_latency`` (the frozen window) unchanged and
hands the rest to the swarm.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .control_space import Pose, controls_from_poses, rollout_batch
from .engine import Swarm, SwarmStats, _Scorer, initialize_swarm, optimize
from .errors import NoValidParticle, PlanningFailure
from .evaluation import COST_TERMS, ConstraintReport, CostBreakdown
from .scenario import CycleConfig, Scenario
from .trajectory import (
    Trajectory,
    dump_trajectory,
    extend_to_horizon,
    interpolate_pose,
    truncate_and_freeze,
)


@dataclass
class PlanResult:
    trajectory: Trajectory
    costs: CostBreakdown
    stats: SwarmStats
    cycle_index: int
    wall_time: float
    timestamp: float = 0.0
    constraints: ConstraintReport | None = None
    ego_pose: Pose | None = None
    swarm: Swarm | None = field(default=None, repr=False)


def initial_template(scenario: Scenario) -> Trajectory:
    """Prefix and start pose, continued with the last prefix control over the horizon.

    Without a prefix the start is continued straight at ``ego.speed``.
    """
    cfg = scenario.planner
    fixed = np.array([p.as_array() for p in (*scenario.ego_prefix, scenario.ego_start)])
    if len(fixed) >= 2:
        ctrl = controls_from_poses(fixed[-2:])[0]
    else:
        ctrl = np.array([scenario.ego_speed * cfg.dt, 0.0])
    tail = rollout_batch(fixed[-1], np.tile(ctrl, (cfg.horizon_steps, 1)))
    t0 = -cfg.prefix_len * cfg.dt
    return Trajectory(np.vstack([fixed, tail]), cfg.dt, t0, cfg.prefix_len, 0)


def plan_cycle(scenario: Scenario, template: Trajectory, now: float, cycle_index: int = 0,
               prev_swarm: Swarm | None = None) -> PlanResult:
    """One planning cycle on a ready template (anchor, frozen and horizon already set)."""
    cfg = scenario.planner
    t_start = time.perf_counter()
    k = template.anchor_index
    snap = scenario.snapshot(
        t_anchor=template.time_of(k),
        ego_start=template.pose(k),
        ego_prefix=template.pose_list()[:k],
        t_now=now,
    )
    scorer = _Scorer(template, snap, cfg.weights, cfg.limits, cfg.cost, cfg.swarm)
    try:
        swarm = initialize_swarm(template, prev_swarm, snap, cfg.swarm, cfg.weights, cfg.limits,
                                 cfg.cost, cycle=cycle_index, _scorer=scorer)
        res = optimize(swarm, snap, cfg.swarm, cfg.weights, cfg.limits, cfg.cost,
                       _scorer=scorer, _t_start=t_start)
    finally:
        scorer.close()
    return PlanResult(res.trajectory, res.costs, res.stats, cycle_index,
                      time.perf_counter() - t_start, now, res.constraints, res.swarm)


def plan_once(scenario: Scenario) -> PlanResult:
    """Single cycle from the scenario's start state.

    Raises :class:`PlanningFailure` when the swarm finds no valid particle.
    """
    try:
        return plan_cycle(scenario, initial_template(scenario), 0.0, 0)
    except NoValidParticle as exc:
        raise PlanningFailure(0, str(exc)) from exc


def next_template(scenario: Scenario, prev: PlanResult, now: float, cycle: CycleConfig) -> Trajectory:
    cfg = scenario.planner
    frozen = truncate_and_freeze(prev.trajectory, now, cycle.freeze_duration, cfg.prefix_len)
    return extend_to_horizon(frozen, cfg.horizon_steps)


def run_simulation(scenario: Scenario, cfg: CycleConfig | None = None) -> list[PlanResult]:
    """Closed-loop simulation; returns one :class:`PlanResult` per cycle.

    The loop ends after ``sim_duration`` or once the ego's remaining
    centerline is shorter than the distance covered at desired speed over
    one horizon. On failure a :class:`PlanningFailure` is raised carrying
    the completed cycles in its ``results`` attribute.
    """
    cfg = cfg or scenario.planner.cycle
    n_cycles = math.floor(cfg.sim_duration / cfg.replan_period + 1e-9)
    centerline = scenario.snapshot(0.0).centerline
    reach = scenario.mode.desired_velocity * scenario.planner.horizon_time
    results: list[PlanResult] = []
    prev: PlanResult | None = None
    for k in range(n_cycles):
        now = k * cfg.replan_period
        if prev is None:
            template = initial_template(scenario)
            ego = scenario.ego_start
        else:
            template = next_template(scenario, prev, now, cfg)
            ego = interpolate_pose(prev.trajectory, now)
        station = float(centerline.project(np.array([ego.x, ego.y]))[0])
        if k > 0 and station >= centerline.length - reach:
            break
        try:
            res = plan_cycle(scenario, template, now, k, prev.swarm if prev else None)
        except NoValidParticle as exc:
            failure = PlanningFailure(k, str(exc))
            failure.results = results
            raise failure from exc
        res.ego_pose = ego
        results.append(res)
        prev = res
    return results


def _fmt(x) -> str:
    return repr(float(x))


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def cost_trace_csv(results: list[PlanResult]) -> str:
    """One row per cycle: index, timestamp, each weighted cost term, total."""
    rows = [[r.cycle_index, _fmt(r.timestamp), *(_fmt(r.costs.weighted[t]) for t in COST_TERMS),
             _fmt(r.costs.total)] for r in results]
    return _csv(rows, ["cycle", "timestamp", *COST_TERMS, "total"])


def valid_particles_csv(results: list[PlanResult]) -> str:
    rows = [[r.cycle_index, _fmt(r.timestamp), r.stats.valid_after_init,
             r.stats.valid_after_optimization, r.stats.iterations, r.stats.termination]
            for r in results]
    return _csv(rows, ["cycle", "timestamp", "valid_after_init", "valid_after_optimization",
                       "iterations", "termination"])


def stats_csv(results: list[PlanResult]) -> str:
    """Iteration rows of every cycle; iteration 0 is the initialized swarm."""
    rows = [[r.cycle_index, it, _fmt(f), c] for r in results for it, f, c in r.stats.rows()]
    return _csv(rows, ["cycle", "iteration", "best_fitness", "valid_count"])


def timing_csv(results: list[PlanResult]) -> str:
    rows = [[r.cycle_index, r.stats.iterations, f"{r.wall_time * 1e3:.3f}"] for r in results]
    return _csv(rows, ["cycle", "iterations", "wall_ms"])


def costs_csv(result: PlanResult) -> str:
    rows = [[t, _fmt(result.costs.raw[t]), _fmt(result.costs.weighted[t])] for t in COST_TERMS]
    rows.append(["total", "", _fmt(result.costs.total)])
    return _csv(rows, ["term", "raw", "weighted"])


def write_plan(result: PlanResult, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "trajectory.csv").write_text(dump_trajectory(result.trajectory))
    (out / "costs.csv").write_text(costs_csv(result))
    (out / "stats.csv").write_text(stats_csv([result]))
    (out / "timing.csv").write_text(timing_csv([result]))


def write_simulation(results: list[PlanResult], out: Path,
                     failure: PlanningFailure | None = None) -> None:
    """Write all simulation outputs under ``out``.

    Everything except ``timing.csv`` is a pure function of scenario and seed.
    """
    out.mkdir(parents=True, exist_ok=True)
    (out / "cost_trace.csv").write_text(cost_trace_csv(results))
    (out / "valid_particles.csv").write_text(valid_particles_csv(results))
    (out / "stats.csv").write_text(stats_csv(results))
    (out / "timing.csv").write_text(timing_csv(results))
    traj_dir = out / "trajectories"
    traj_dir.mkdir(exist_ok=True)
    for r in results:
        (traj_dir / f"cycle_{r.cycle_index:04d}.csv").write_text(dump_trajectory(r.trajectory))
    status = "ok" if failure is None else f"planning_failure cycle={failure.cycle}"
    (out / "status.txt").write_text(f"{status}\ncycles={len(results)}\n")
