"""Regenerate the bundled scenario files under src/se2pso/scenarios/.

    python3 tools/make_scenarios.py
"""

from __future__ import annotations

import math
from pathlib import Path

import yaml

OUT = Path(__file__).resolve().parent.parent / "src" / "se2pso" / "scenarios"

# tuning: boundary and obstacle terms dominate, then velocity
WEIGHTS = {
    "velocity": 1.0,
    "acceleration": 0.5,
    "jolt": 0.5,
    "driving_area": 20.0,
    "orientation": 2.0,
    "yaw_rate": 1.0,
    "halting": 0.05,
    "obstacle_clearance": 10.0,
    "lateral_bias": 0.2,
}

PLANNER = {
    "dt": 0.3,
    "horizon_steps": 24,
    "prefix_len": 3,
    "particles": 60,
    "max_iterations": 50,
    "seed": 0,
    "weights": WEIGHTS,
    "limits": {"max_accel": 2.0, "max_decel": 3.0, "max_jolt": 2.0,
               "max_yaw_rate": 0.6, "max_steer_rate": 0.1, "min_clearance": 0.2},
    "cycle": {"replan_period": 0.1, "pipeline_latency": 0.05, "sim_duration": 30.0},
}

EGO_FOOTPRINT = {"length": 4.5, "width": 1.8}


def r(x: float) -> float:
    return round(float(x), 4)


def corridor(center: list[tuple[float, float]], width: float) -> list[list[float]]:
    """Right chain forward then left chain backward around a centerline polyline."""
    right, left = [], []
    n = len(center)
    for i, (x, y) in enumerate(center):
        a = center[max(i - 1, 0)]
        b = center[min(i + 1, n - 1)]
        h = math.atan2(b[1] - a[1], b[0] - a[0])
        nx, ny = -math.sin(h), math.cos(h)
        right.append([r(x - nx * width / 2), r(y - ny * width / 2)])
        left.append([r(x + nx * width / 2), r(y + ny * width / 2)])
    return right + left[::-1]


def box(cx: float, cy: float, length: float, width: float) -> list[list[float]]:
    hl, hw = length / 2, width / 2
    return [[r(cx - hl), r(cy - hw)], [r(cx + hl), r(cy - hw)],
            [r(cx + hl), r(cy + hw)], [r(cx - hl), r(cy + hw)]]


def planner(**changes) -> dict:
    out = {k: (dict(v) if isinstance(v, dict) else v) for k, v in PLANNER.items()}
    for k, v in changes.items():
        if isinstance(v, dict):
            out[k].update(v)
        else:
            out[k] = v
    return out


def straight_empty() -> dict:
    return {
        "name": "straight_empty",
        "driving_area": corridor([(0.0, 0.0), (450.0, 0.0)], 4.0),
        "mode": {"desired_velocity": 10.0, "speed_limit": 13.9},
        "ego": {"start": [10.0, 0.0, 0.0], "speed": 8.0, "footprint": EGO_FOOTPRINT},
        "planner": planner(),
    }


def suburban_parked() -> dict:
    width = 3.4
    parked = [box(30.0 + 22.0 * k, -width / 2 - 0.25 - 0.95, 4.6, 1.9) for k in range(8)]
    parked += [box(41.0 + 30.0 * k, width / 2 + 0.35 + 0.95, 4.6, 1.9) for k in range(5)]
    return {
        "name": "suburban_parked",
        "driving_area": corridor([(0.0, 0.0), (260.0, 0.0)], width),
        "mode": {"desired_velocity": 8.0, "speed_limit": 13.9},
        "static_obstacles": parked,
        "ego": {"start": [10.0, 0.0, 0.0], "speed": 7.0, "footprint": EGO_FOOTPRINT},
        "planner": planner(cycle={"sim_duration": 15.0}),
    }


def obstacle_evasion() -> dict:
    return {
        "name": "obstacle_evasion",
        "driving_area": corridor([(0.0, 0.0), (250.0, 0.0)], 7.0),
        "mode": {"desired_velocity": 10.0, "speed_limit": 13.9, "lateral_bias": -1.75},
        "static_obstacles": [box(75.0, -1.9, 4.6, 2.0)],
        "ego": {"start": [10.0, -1.75, 0.0], "speed": 9.0, "footprint": EGO_FOOTPRINT},
        "planner": planner(cycle={"sim_duration": 12.0}),
    }


def turn_centerline(straight_in=40.0, radius=20.0, straight_out=140.0, step_deg=10.0):
    pts = [(0.0, 0.0), (straight_in, 0.0)]
    cx, cy = straight_in, radius
    n = int(round(90 / step_deg))
    for k in range(1, n + 1):
        a = -math.pi / 2 + math.radians(step_deg * k)
        pts.append((cx + radius * math.cos(a), cy + radius * math.sin(a)))
    pts.append((straight_in + radius, radius + straight_out))
    return pts


def turn_blocked() -> dict:
    # left turn, then a stop line that is active for a few seconds while a
    # crossing vehicle blocks the lane beyond it
    width = 4.0
    center = turn_centerline()
    x_out = 60.0
    stop_y = 80.0
    return {
        "name": "turn_blocked",
        "driving_area": corridor([(-15.0, 0.0)] + center[1:], width),
        "mode": {
            "desired_velocity": 10.0,
            "speed_limit": 13.9,
            "stop_lines": [{"p1": [x_out - width / 2, stop_y], "p2": [x_out + width / 2, stop_y],
                            "active": True, "active_from": 8.0, "active_until": 11.0}],
        },
        "dynamic_obstacles": [{"shape": box(0.0, 0.0, 4.5, 1.9),
                               "pose": [35.0, stop_y + 12.0, 0.0], "velocity": [2.5, 0.0]}],
        "ego": {"start": [0.0, 0.0, 0.0], "speed": 8.0, "footprint": EGO_FOOTPRINT},
        "planner": planner(cycle={"sim_duration": 14.0}),
    }


def blocked() -> dict:
    return {
        "name": "blocked",
        "driving_area": corridor([(0.0, 0.0), (120.0, 0.0)], 4.0),
        "mode": {"desired_velocity": 12.0, "speed_limit": 13.9},
        "static_obstacles": [box(24.0, 0.0, 1.0, 6.0)],
        "ego": {"start": [10.0, 0.0, 0.0], "speed": 12.0, "footprint": EGO_FOOTPRINT},
        "planner": planner(cycle={"sim_duration": 5.0}),
    }


def grid_road() -> dict:
    # 0.5 m cells; rows[0] is the lowest y. Obstacles sit beside a 4 m lane.
    res, w, h = 0.5, 240, 16
    rows = [["."] * w for _ in range(h)]

    def fill(x0, x1, y0, y1):
        for row in range(int(y0 / res), int(y1 / res)):
            for col in range(int(x0 / res), int(x1 / res)):
                rows[row][col] = "#"

    # grid origin (0, -4): lane occupies y in [-2, 2] -> rows 4..11
    fill(40, 45, 0.0, 1.5)       # parked car, right side
    fill(70, 72, 6.5, 8.0)       # bollards, left side
    fill(73, 75, 6.5, 8.0)
    fill(95, 100, 0.5, 1.5)      # low wall, right side
    return {
        "name": "grid_road",
        "driving_area": corridor([(0.0, 0.0), (120.0, 0.0)], 4.0),
        "mode": {"desired_velocity": 8.0, "speed_limit": 13.9},
        "grid": {"origin": [0.0, -4.0, 0.0], "resolution": res, "threshold": 128,
                 "rows": ["".join(row) for row in rows]},
        "ego": {"start": [5.0, 0.0, 0.0], "speed": 7.0, "footprint": EGO_FOOTPRINT},
        "planner": planner(cycle={"sim_duration": 8.0}),
    }


def lead_vehicle() -> dict:
    return {
        "name": "lead_vehicle",
        "driving_area": corridor([(0.0, 0.0), (300.0, 0.0)], 7.0),
        "mode": {"desired_velocity": 12.0, "speed_limit": 13.9, "lateral_bias": -1.75},
        "dynamic_obstacles": [{"shape": box(0.0, 0.0, 4.6, 1.9),
                               "pose": [45.0, -1.75, 0.0], "velocity": [6.0, 0.0]}],
        "ego": {"start": [10.0, -1.75, 0.0], "speed": 10.0, "footprint": EGO_FOOTPRINT},
        "planner": planner(cycle={"sim_duration": 12.0}),
    }


class _Dumper(yaml.SafeDumper):
    pass


def _seq(dumper, data):
    flow = all(not isinstance(v, (list, dict)) for v in data) or \
        all(isinstance(v, list) and all(not isinstance(u, (list, dict)) for u in v) for v in data)
    return dumper.represent_sequence("tag:yaml.org,2002:seq", data, flow_style=flow)


_Dumper.add_representer(list, _seq)


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    for make in (straight_empty, suburban_parked, obstacle_evasion, turn_blocked, blocked,
                 grid_road, lead_vehicle):
        doc = make()
        path = OUT / f"{doc['name']}.yaml"
        path.write_text(yaml.dump(doc, Dumper=_Dumper, sort_keys=False, width=100))
        print(path)


if __name__ == "__main__":
    main()
