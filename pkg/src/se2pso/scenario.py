"""Scenario files: YAML documents describing the world and the planner setup.

Top-level sections (SI units, radians)::

    name: str                                  (optional)
    driving_area: [[x, y], ...]                right boundary forward, then left boundary back
    mode: {desired_velocity, speed_limit, lateral_bias,
           stop_lines: [{p1: [x, y], p2: [x, y], active, active_from, active_until}]}
    static_obstacles: [[[x, y], ...], ...]
    grid: {origin: [x, y, theta], resolution, width, height, threshold,
           data: [byte, ...] | rows: ["..##", ...]}   rows[0] is the lowest-y row
    dynamic_obstacles: [{shape: [[x, y], ...], poses: [[x, y, theta], ...]}
                        | {shape, pose: [x, y, theta], velocity: [vx, vy]}]
    ego: {start: [x, y, theta], prefix: [[x, y, theta], ...], speed,
          footprint: {length, width, circles}}
    planner: {dt, horizon_steps, prefix_len, particles, max_iterations, seed,
              weights: {...}, limits: {...}, cost: {...}, swarm: {...},
              cycle: {replan_period, pipeline_latency, sim_duration}}

``poses`` of a dynamic obstacle are given at times ``0, dt, 2 dt, ...``;
past the last entry the obstacle keeps its last observed velocity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .control_space import Pose
from .environment import (
    DrivingMode,
    DynamicObstacle,
    EnvironmentSnapshot,
    OccupancyGrid,
    StopLine,
    extract_obstacle_polygons,
)
from .engine import SwarmConfig
from .errors import ParseError, PlannerError, ValidationError
from .evaluation import CostParameters, CostWeights, Limits
from .geometry import FootprintModel, Polygon


@dataclass(frozen=True)
class CycleConfig:
    replan_period: float = 0.1
    pipeline_latency: float = 0.0
    sim_duration: float = 10.0

    def __post_init__(self):
        if not self.replan_period > 0:
            raise ValidationError("replan_period must be positive")
        if self.pipeline_latency < 0 or self.sim_duration < 0:
            raise ValidationError("pipeline_latency and sim_duration must be >= 0")

    @property
    def freeze_duration(self) -> float:
        return self.replan_period + self.pipeline_latency


@dataclass(frozen=True)
class PlannerConfig:
    dt: float = 0.3
    horizon_steps: int = 24
    prefix_len: int = 3
    swarm: SwarmConfig = field(default_factory=SwarmConfig)
    weights: CostWeights = field(default_factory=CostWeights)
    limits: Limits = field(default_factory=Limits)
    cost: CostParameters = field(default_factory=CostParameters)
    cycle: CycleConfig = field(default_factory=CycleConfig)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValidationError("planner.dt must be positive")
        if self.horizon_steps < 1:
            raise ValidationError("planner.horizon_steps must be >= 1")
        if self.prefix_len < 0:
            raise ValidationError("planner.prefix_len must be >= 0")
        if not self.dt * self.horizon_steps > self.cycle.freeze_duration:
            raise ValidationError(
                f"horizon {self.dt * self.horizon_steps:.3f} s must exceed replan period plus "
                f"latency ({self.cycle.freeze_duration:.3f} s)"
            )

    @property
    def horizon_time(self) -> float:
        return self.dt * self.horizon_steps


@dataclass(frozen=True, eq=False)
class DynamicSpec:
    shape: Polygon
    poses: np.ndarray            # observed/predicted poses at t = k * dt
    velocity: tuple | None = None

    def poses_at(self, times: np.ndarray, dt: float) -> np.ndarray:
        if self.velocity is not None:
            p0 = self.poses[0]
            vx, vy = self.velocity
            return np.column_stack([p0[0] + vx * times, p0[1] + vy * times,
                                    np.full(len(times), p0[2])])
        u = times / dt
        idx = np.rint(u).astype(int)
        if not np.allclose(u, idx, atol=1e-6):
            raise ValidationError("dynamic obstacle poses are only defined on the dt grid")
        n = len(self.poses)
        inside = np.clip(idx, 0, n - 1)
        out = self.poses[inside].copy()
        beyond = idx - (n - 1)
        if n >= 2 and np.any(beyond > 0):
            step = self.poses[-1, :2] - self.poses[-2, :2]
            out[:, :2] += np.maximum(beyond, 0)[:, None] * step
        return out


@dataclass(frozen=True, eq=False)
class Scenario:
    driving_area: Polygon
    mode: DrivingMode
    ego_start: Pose
    ego_prefix: tuple
    ego_speed: float
    footprint: FootprintModel
    planner: PlannerConfig
    static_obstacles: tuple = ()
    dynamic: tuple = ()
    name: str = "scenario"

    def with_planner(self, **changes) -> "Scenario":
        return replace(self, planner=replace(self.planner, **changes))

    def with_swarm(self, **changes) -> "Scenario":
        return self.with_planner(swarm=replace(self.planner.swarm, **changes))

    def snapshot(self, t_anchor: float = 0.0, ego_start: Pose | None = None,
                 ego_prefix=None, t_now: float | None = None,
                 steps: int | None = None) -> EnvironmentSnapshot:
        """World state for a plan anchored at ``t_anchor``.

        Dynamic predictions cover ``steps + 1`` poses (defaults to the
        planner horizon) starting at the anchor time; stop-line activity is
        resolved at ``t_now`` (defaults to ``t_anchor``).
        """
        dt = self.planner.dt
        steps = self.planner.horizon_steps if steps is None else steps
        times = t_anchor + dt * np.arange(steps + 1)
        dyn = tuple(DynamicObstacle(d.shape, d.poses_at(times, dt)) for d in self.dynamic)
        t_now = t_anchor if t_now is None else t_now
        return EnvironmentSnapshot(
            driving_area=self.driving_area,
            mode=self.mode,
            ego_start=self.ego_start if ego_start is None else ego_start,
            footprint=self.footprint,
            dt=dt,
            static_obstacles=self.static_obstacles,
            dynamic_obstacles=dyn,
            ego_prefix=self.ego_prefix if ego_prefix is None else tuple(ego_prefix),
            timestamp=t_anchor,
            stop_lines=tuple(self.mode.active_stop_lines(t_now)),
        )


class _Doc:
    """Parsed YAML plus the source line of every mapping key and list item."""

    def __init__(self, text: str):
        try:
            node = yaml.compose(text, Loader=yaml.SafeLoader)
            self.data = yaml.safe_load(text)
        except yaml.MarkedYAMLError as exc:
            mark = exc.problem_mark or exc.context_mark
            raise ParseError(str(exc.problem or exc), line=mark.line + 1 if mark else None) from exc
        except yaml.YAMLError as exc:
            raise ParseError(str(exc)) from exc
        self.lines: dict[tuple, int] = {}
        if node is not None:
            self._walk(node, ())

    def _walk(self, node, path):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                p = path + (k.value,)
                self.lines[p] = k.start_mark.line + 1
                self._walk(v, p)
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                p = path + (i,)
                self.lines[p] = v.start_mark.line + 1
                self._walk(v, p)

    def line(self, path):
        while path:
            if path in self.lines:
                return self.lines[path]
            path = path[:-1]
        return None

    def fail(self, path, msg):
        name = ".".join(str(p) for p in path) if path else None
        raise ParseError(msg, line=self.line(tuple(path)), field=name)


def _get(doc: _Doc, obj, path, key, default=..., required=False):
    if not isinstance(obj, dict):
        doc.fail(path, "expected a mapping")
    if key in obj:
        return obj[key]
    if required or default is ...:
        doc.fail(path + (key,), "missing required field")
    return default


def _number(doc, value, path, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        doc.fail(path, f"expected a number, got {value!r}")
    if integer:
        if isinstance(value, float) and not value.is_integer():
            doc.fail(path, f"expected an integer, got {value!r}")
        return int(value)
    if not math.isfinite(value):
        doc.fail(path, "expected a finite number")
    return float(value)


def _vector(doc, value, path, size):
    if not isinstance(value, list) or len(value) != size:
        doc.fail(path, f"expected a list of {size} numbers")
    return [_number(doc, v, path + (i,)) for i, v in enumerate(value)]


def _points(doc, value, path):
    if not isinstance(value, list) or not value:
        doc.fail(path, "expected a non-empty list of [x, y] points")
    return [_vector(doc, v, path + (i,), 2) for i, v in enumerate(value)]


def _poses(doc, value, path):
    if not isinstance(value, list):
        doc.fail(path, "expected a list of [x, y, theta] poses")
    return [_vector(doc, v, path + (i,), 3) for i, v in enumerate(value)]


def _polygon(doc, value, path):
    pts = _points(doc, value, path)
    try:
        return Polygon.from_any_orientation(pts)
    except ValidationError as exc:
        raise ValidationError(f"{'.'.join(map(str, path))}: {exc}") from None


def _check_keys(doc, obj, path, allowed):
    if not isinstance(obj, dict):
        doc.fail(path, "expected a mapping")
    for k in obj:
        if k not in allowed:
            doc.fail(path + (k,), f"unknown field (allowed: {', '.join(sorted(allowed))})")


def _dataclass_section(doc, obj, path, cls, renames=None):
    renames = renames or {}
    names = {f.name: f for f in fields(cls)}
    allowed = set(names) | set(renames)
    _check_keys(doc, obj, path, allowed)
    kwargs = {}
    for k, v in obj.items():
        name = renames.get(k, k)
        f = names[name]
        ftype = str(f.type)
        if "bool" in ftype:
            if not isinstance(v, bool):
                doc.fail(path + (k,), "expected true or false")
            kwargs[name] = v
        elif ftype.startswith("int"):
            kwargs[name] = _number(doc, v, path + (k,), integer=True)
        elif v is None:
            kwargs[name] = None
        else:
            kwargs[name] = _number(doc, v, path + (k,))
    try:
        return cls(**kwargs)
    except (ValueError, ValidationError) as exc:
        raise ValidationError(f"{'.'.join(map(str, path))}: {exc}") from None


_TOP = {"name", "driving_area", "mode", "static_obstacles", "grid", "dynamic_obstacles", "ego", "planner"}


def parse_scenario(text: str, name: str = "scenario") -> Scenario:
    doc = _Doc(text)
    d = doc.data
    if not isinstance(d, dict):
        raise ParseError("scenario must be a mapping at top level", line=1)
    _check_keys(doc, d, (), _TOP)

    planner = _parse_planner(doc, _get(doc, d, (), "planner", {}) or {})
    area = _polygon(doc, _get(doc, d, (), "driving_area", required=True), ("driving_area",))
    mode = _parse_mode(doc, _get(doc, d, (), "mode", required=True))

    statics = [_polygon(doc, poly, ("static_obstacles", i))
               for i, poly in enumerate(_get(doc, d, (), "static_obstacles", []) or [])]
    grid_obj = _get(doc, d, (), "grid", None)
    if grid_obj is not None:
        grid, threshold = _parse_grid(doc, grid_obj)
        statics.extend(extract_obstacle_polygons(grid, threshold))

    dynamic = []
    for i, obj in enumerate(_get(doc, d, (), "dynamic_obstacles", []) or []):
        dynamic.append(_parse_dynamic(doc, obj, ("dynamic_obstacles", i), planner))

    ego = _get(doc, d, (), "ego", required=True)
    _check_keys(doc, ego, ("ego",), {"start", "prefix", "speed", "footprint"})
    start = Pose(*_vector(doc, _get(doc, ego, ("ego",), "start", required=True), ("ego", "start"), 3))
    speed = _number(doc, _get(doc, ego, ("ego",), "speed", 0.0), ("ego", "speed"))
    if speed < 0:
        raise ValidationError("ego.speed must be >= 0")
    if "prefix" in ego:
        prefix = tuple(Pose(*p) for p in _poses(doc, ego["prefix"], ("ego", "prefix")))
    else:
        prefix = straight_prefix(start, speed, planner.dt, planner.prefix_len)
    if len(prefix) != planner.prefix_len:
        raise ValidationError(
            f"ego.prefix has {len(prefix)} poses but planner.prefix_len is {planner.prefix_len}"
        )
    fp_obj = _get(doc, ego, ("ego",), "footprint", {"length": 4.5, "width": 1.8})
    _check_keys(doc, fp_obj, ("ego", "footprint"), {"length", "width", "circles"})
    length = _number(doc, _get(doc, fp_obj, ("ego", "footprint"), "length", required=True), ("ego", "footprint", "length"))
    width = _number(doc, _get(doc, fp_obj, ("ego", "footprint"), "width", required=True), ("ego", "footprint", "width"))
    n_circ = _number(doc, fp_obj.get("circles", 3), ("ego", "footprint", "circles"), integer=True)
    footprint = FootprintModel.for_vehicle(length, width, n_circ)

    name = str(d.get("name", name))
    sc = Scenario(
        driving_area=area, mode=mode, ego_start=start, ego_prefix=prefix, ego_speed=speed,
        footprint=footprint, planner=planner, static_obstacles=tuple(statics),
        dynamic=tuple(dynamic), name=name,
    )
    validate_scenario(sc)
    return sc


def straight_prefix(start: Pose, speed: float, dt: float, count: int) -> tuple:
    c, s = math.cos(start.theta), math.sin(start.theta)
    return tuple(Pose(start.x - j * speed * dt * c, start.y - j * speed * dt * s, start.theta)
                 for j in range(count, 0, -1))


def validate_scenario(sc: Scenario) -> None:
    """Check every cross-section invariant; raises :class:`ValidationError`."""
    need = sc.planner.horizon_steps + 1
    for i, dyn in enumerate(sc.dynamic):
        if dyn.velocity is None and len(dyn.poses) < need:
            raise ValidationError(
                f"dynamic_obstacles.{i}: {len(dyn.poses)} predicted poses do not cover the "
                f"{sc.planner.horizon_steps}-step horizon ({need} poses needed)"
            )
    try:
        snap = sc.snapshot(0.0)
        snap.centerline
    except PlannerError as exc:
        raise ValidationError(str(exc)) from None


def _parse_mode(doc, obj) -> DrivingMode:
    path = ("mode",)
    _check_keys(doc, obj, path, {"desired_velocity", "speed_limit", "stop_lines", "lateral_bias"})
    lines = []
    for i, sl in enumerate(obj.get("stop_lines", []) or []):
        p = path + ("stop_lines", i)
        _check_keys(doc, sl, p, {"p1", "p2", "active", "active_from", "active_until"})
        active = sl.get("active", True)
        if not isinstance(active, bool):
            doc.fail(p + ("active",), "expected true or false")
        lines.append(StopLine(
            tuple(_vector(doc, _get(doc, sl, p, "p1", required=True), p + ("p1",), 2)),
            tuple(_vector(doc, _get(doc, sl, p, "p2", required=True), p + ("p2",), 2)),
            active,
            _number(doc, sl.get("active_from", -math.inf), p + ("active_from",)) if "active_from" in sl else -math.inf,
            _number(doc, sl.get("active_until", math.inf), p + ("active_until",)) if "active_until" in sl else math.inf,
        ))
    return DrivingMode(
        desired_velocity=_number(doc, _get(doc, obj, path, "desired_velocity", required=True), path + ("desired_velocity",)),
        speed_limit=_number(doc, _get(doc, obj, path, "speed_limit", required=True), path + ("speed_limit",)),
        stop_lines=tuple(lines),
        lateral_bias=_number(doc, obj.get("lateral_bias", 0.0), path + ("lateral_bias",)),
    )


def _parse_grid(doc, obj):
    path = ("grid",)
    _check_keys(doc, obj, path, {"origin", "resolution", "width", "height", "threshold", "data", "rows"})
    origin = Pose(*_vector(doc, obj.get("origin", [0.0, 0.0, 0.0]), path + ("origin",), 3))
    res = _number(doc, _get(doc, obj, path, "resolution", required=True), path + ("resolution",))
    threshold = _number(doc, obj.get("threshold", 128), path + ("threshold",), integer=True)
    if "rows" in obj:
        rows = obj["rows"]
        if not isinstance(rows, list) or not rows or not all(isinstance(r, str) for r in rows):
            doc.fail(path + ("rows",), "expected a list of strings")
        width = len(rows[0])
        if any(len(r) != width for r in rows):
            doc.fail(path + ("rows",), "all rows must have the same length")
        data = np.array([[255 if ch in "#X" else 0 for ch in r] for r in rows], dtype=np.uint8)
        height = len(rows)
    else:
        width = _number(doc, _get(doc, obj, path, "width", required=True), path + ("width",), integer=True)
        height = _number(doc, _get(doc, obj, path, "height", required=True), path + ("height",), integer=True)
        raw = _get(doc, obj, path, "data", required=True)
        if not isinstance(raw, list) or not all(isinstance(v, int) and 0 <= v <= 255 for v in raw):
            doc.fail(path + ("data",), "expected a list of bytes (0..255)")
        data = np.array(raw, dtype=np.uint8)
    return OccupancyGrid(origin, res, width, height, data.ravel()), threshold


def _parse_dynamic(doc, obj, path, planner) -> DynamicSpec:
    _check_keys(doc, obj, path, {"shape", "poses", "pose", "velocity"})
    shape = _polygon(doc, _get(doc, obj, path, "shape", required=True), path + ("shape",))
    if "velocity" in obj:
        vel = tuple(_vector(doc, obj["velocity"], path + ("velocity",), 2))
        if "pose" in obj:
            p0 = _vector(doc, obj["pose"], path + ("pose",), 3)
        else:
            p0 = _poses(doc, _get(doc, obj, path, "poses", required=True), path + ("poses",))[0]
        return DynamicSpec(shape, np.array([p0], dtype=float), vel)
    if "pose" in obj:
        doc.fail(path + ("pose",), "a single pose needs a velocity")
    poses = _poses(doc, _get(doc, obj, path, "poses", required=True), path + ("poses",))
    if not poses:
        doc.fail(path + ("poses",), "need at least one pose")
    return DynamicSpec(shape, np.array(poses, dtype=float), None)


def _parse_planner(doc, obj) -> PlannerConfig:
    path = ("planner",)
    _check_keys(doc, obj, path, {"dt", "horizon_steps", "prefix_len", "particles", "max_iterations",
                                 "seed", "weights", "limits", "cost", "swarm", "cycle"})
    swarm_obj = dict(obj.get("swarm", {}) or {})
    _check_keys(doc, swarm_obj, path + ("swarm",), {f.name for f in fields(SwarmConfig)} - {"n_particles", "max_iterations", "seed"})
    for key, target in (("particles", "n_particles"), ("max_iterations", "max_iterations"), ("seed", "seed")):
        if key in obj:
            swarm_obj[target] = obj[key]
    swarm = _dataclass_section(doc, swarm_obj, path + ("swarm",), SwarmConfig)
    weights = _dataclass_section(doc, obj.get("weights", {}) or {}, path + ("weights",), CostWeights)
    limits = _dataclass_section(doc, obj.get("limits", {}) or {}, path + ("limits",), Limits)
    cost = _dataclass_section(doc, obj.get("cost", {}) or {}, path + ("cost",), CostParameters)
    cycle = _dataclass_section(doc, obj.get("cycle", {}) or {}, path + ("cycle",), CycleConfig)
    kwargs: dict[str, Any] = dict(swarm=swarm, weights=weights, limits=limits, cost=cost, cycle=cycle)
    if "dt" in obj:
        kwargs["dt"] = _number(doc, obj["dt"], path + ("dt",))
    for key in ("horizon_steps", "prefix_len"):
        if key in obj:
            kwargs[key] = _number(doc, obj[key], path + (key,), integer=True)
    return PlannerConfig(**kwargs)


def load_scenario(path) -> Scenario:
    """Read, parse and validate a scenario file.

    Raises :class:`ParseError` for malformed text or fields and
    :class:`ValidationError` when a world invariant is broken.
    """
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {p}: {exc.strerror}") from exc
    return parse_scenario(text, name=p.stem)
