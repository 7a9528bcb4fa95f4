import math
from dataclasses import replace

import numpy as np
import pytest

from se2pso.cli import EXIT_INVALID, EXIT_OK, EXIT_PLANNING, main
from se2pso.errors import PlanningFailure, ValidationError
from se2pso.evaluation import evaluate_constraints
from se2pso.replanner import initial_template, next_template, plan_once, run_simulation
from se2pso.scenario import CycleConfig, PlannerConfig
from se2pso.trajectory import read_trajectory_dump

from conftest import continuity_breaks


@pytest.fixture(scope="module")
def short_run(scenario):
    sc = scenario("straight_empty")
    return sc, run_simulation(sc, CycleConfig(0.1, 0.05, 5.0))


def test_cycle_config_checks():
    with pytest.raises(ValidationError):
        CycleConfig(replan_period=0.0)
    with pytest.raises(ValidationError):
        PlannerConfig(horizon_steps=1, cycle=CycleConfig(0.2, 0.2, 1.0))
    assert CycleConfig(0.1, 0.05).freeze_duration == pytest.approx(0.15)


def test_initial_template_continues_the_prefix(scenario):
    sc = scenario("straight_empty")
    t = initial_template(sc)
    assert t.prefix_len == 3 and t.frozen_len == 0
    assert len(t) == 3 + 1 + 24
    assert t.time_of(t.anchor_index) == 0.0
    steps = np.diff(t.poses[:, 0])
    np.testing.assert_allclose(steps, 8.0 * 0.3, rtol=1e-12)


def test_five_second_run(short_run):
    sc, results = short_run
    assert len(results) == 50
    assert [r.cycle_index for r in results] == list(range(50))
    for r in results:
        snap = sc.snapshot(t_anchor=r.trajectory.time_of(r.trajectory.anchor_index),
                           ego_start=r.trajectory.pose(r.trajectory.anchor_index),
                           ego_prefix=r.trajectory.pose_list()[:r.trajectory.anchor_index])
        assert evaluate_constraints(r.trajectory, snap, sc.planner.limits).valid
    assert continuity_breaks(results) == []


def test_frozen_window_length(short_run):
    _, results = short_run
    for r in results[1:]:
        t = r.trajectory
        now = r.timestamp
        # anchor at or before now, frozen poses reach now + 0.15 s and no further than needed
        assert t.time_of(t.anchor_index) <= now + 1e-9 < t.time_of(t.anchor_index) + t.dt
        assert t.time_of(t.first_free - 1) >= now + 0.15 - 1e-9
        assert t.time_of(t.first_free - 2) < now + 0.15 - 1e-9
        assert t.frozen_len in (1, 2)


def test_ego_lies_on_the_previous_plan(short_run):
    _, results = short_run
    for prev, r in zip(results, results[1:]):
        xy = prev.trajectory.poses[:, :2]
        d = np.hypot(*(xy - [r.ego_pose.x, r.ego_pose.y]).T)
        step = np.max(np.hypot(*np.diff(xy, axis=0).T))
        assert d.min() <= step
        # straight segments: the interpolated pose sits on the polyline
        assert abs(r.ego_pose.y - np.interp(r.ego_pose.x, xy[:, 0], prev.trajectory.poses[:, 1])) < 1e-3


def test_next_template_copies_poses(short_run, scenario):
    sc, results = short_run
    cyc = sc.planner.cycle
    t = next_template(sc, results[4], 0.5, cyc)
    a = results[4].trajectory
    for i in range(t.first_free):
        j = round((t.time_of(i) - a.t0) / a.dt)
        assert np.array_equal(t.poses[i], a.poses[j])
    assert len(t) - t.first_free + t.frozen_len == sc.planner.horizon_steps


def test_zero_duration_gives_no_results(scenario):
    assert run_simulation(scenario("straight_empty"), CycleConfig(0.1, 0.05, 0.0)) == []


def test_blocked_road_fails_with_partial_results(scenario):
    sc = scenario("blocked")
    with pytest.raises(PlanningFailure) as err:
        run_simulation(sc, CycleConfig(0.1, 0.05, 5.0))
    assert err.value.cycle == len(err.value.results)
    with pytest.raises(PlanningFailure):
        plan_once(sc)


def test_cli_exit_codes(tmp_path):
    assert main(["validate", "straight_empty"]) == EXIT_OK
    assert main(["validate", "no_such_scenario"]) == EXIT_INVALID
    bad = tmp_path / "bad.yaml"
    bad.write_text("driving_area: [[0, 0], [1, 0]\n")
    assert main(["validate", str(bad)]) == EXIT_INVALID
    assert main(["simulate", "blocked", "--duration", "1", "--out", str(tmp_path / "b")]) == EXIT_PLANNING
    assert (tmp_path / "b" / "status.txt").read_text().startswith("planning_failure")


def test_cli_plan_writes_a_valid_dump(tmp_path, scenario):
    out = tmp_path / "plan"
    assert main(["plan", "obstacle_evasion", "--seed", "3", "--out", str(out)]) == EXIT_OK
    traj = read_trajectory_dump((out / "trajectory.csv").read_text(), prefix_len=3)
    assert len(traj) == 28
    assert {p.name for p in out.iterdir()} >= {"trajectory.csv", "costs.csv", "stats.csv"}


def test_cli_simulate_outputs(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "straight_empty", "--duration", "1", "--rate", "10", "--out", str(out)]) == EXIT_OK
    names = {p.name for p in out.iterdir()}
    assert names >= {"cost_trace.csv", "valid_particles.csv", "stats.csv", "timing.csv", "trajectories",
                     "status.txt"}
    assert len(list((out / "trajectories").iterdir())) == 10
    trace = (out / "cost_trace.csv").read_text().splitlines()
    assert len(trace) == 11
