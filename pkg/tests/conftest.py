import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from se2pso.cli import resolve_scenario
from se2pso.control_space import Pose
from se2pso.environment import DrivingMode, EnvironmentSnapshot
from se2pso.geometry import FootprintModel, Polygon

settings.register_profile("default", deadline=None, max_examples=200,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=50)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    number, title = mark.args
    prev = _CRITERIA.get(number)
    status = "PASS" if rep.passed else "FAIL"
    if prev is not None and prev[1] == "FAIL":
        status = "FAIL"
    _CRITERIA[number] = (title, status)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, status = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n} {status}: {title}")


@pytest.fixture(scope="session")
def scenario():
    cache = {}

    def load(name):
        if name not in cache:
            cache[name] = resolve_scenario(name)
        return cache[name]

    return load


def corridor_snapshot(length=100.0, width=8.0, desired=10.0, limit=13.9, obstacles=(),
                      dynamic=(), ego=(5.0, 0.0, 0.0), lateral_bias=0.0, stop_lines=()):
    area = Polygon([[0, -width / 2], [length, -width / 2], [length, width / 2], [0, width / 2]])
    mode = DrivingMode(desired, limit, tuple(stop_lines), lateral_bias)
    return EnvironmentSnapshot(area, mode, Pose(*ego), FootprintModel.for_vehicle(4.5, 1.8), 0.3,
                               tuple(obstacles), tuple(dynamic))


def straight_poses(n, step, y=0.0, x0=0.0):
    return np.column_stack([x0 + step * np.arange(n), np.full(n, y), np.zeros(n)])


def continuity_breaks(results):
    """Consecutive plan pairs whose fixed poses differ from the earlier plan at equal times."""
    bad = []
    for prev, nxt in zip(results, results[1:]):
        a, b = prev.trajectory, nxt.trajectory
        for i in range(b.first_free):
            j = round((b.time_of(i) - a.t0) / a.dt)
            if not (0 <= j < len(a) and abs(a.time_of(j) - b.time_of(i)) < 1e-9
                    and np.array_equal(a.poses[j], b.poses[i])):
                bad.append((nxt.cycle_index, i))
                break
    return bad
