"""World inputs of one planning cycle and occupancy-grid obstacle extraction."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy import ndimage

from .control_space import Pose, poses_to_array
from .errors import IndexOutOfHorizon, ValidationError
from .geometry import Centerline, EdgeSet, FootprintModel, Polygon


@dataclass(frozen=True)
class StopLine:
    p1: tuple[float, float]
    p2: tuple[float, float]
    active: bool = True
    # optional activity window in absolute scenario time
    active_from: float = -math.inf
    active_until: float = math.inf

    def is_active(self, t: float) -> bool:
        return self.active and self.active_from <= t < self.active_until

    @property
    def midpoint(self) -> np.ndarray:
        return 0.5 * (np.asarray(self.p1, dtype=float) + np.asarray(self.p2, dtype=float))


@dataclass(frozen=True)
class DrivingMode:
    desired_velocity: float
    speed_limit: float
    stop_lines: tuple[StopLine, ...] = ()
    lateral_bias: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "stop_lines", tuple(self.stop_lines))
        if not 0.0 <= self.desired_velocity <= self.speed_limit:
            raise ValidationError(
                f"need 0 <= desired_velocity ({self.desired_velocity}) "
                f"<= speed_limit ({self.speed_limit})"
            )

    def active_stop_lines(self, t: float) -> list[StopLine]:
        return [s for s in self.stop_lines if s.is_active(t)]


@dataclass(frozen=True, eq=False)
class DynamicObstacle:
    """Body-frame shape plus one predicted pose per trajectory step."""

    shape: Polygon
    predicted_poses: np.ndarray

    def __post_init__(self):
        poses = np.array(self.predicted_poses, dtype=float).reshape(-1, 3)
        poses.flags.writeable = False
        object.__setattr__(self, "predicted_poses", poses)

    def polygon_at(self, step: int) -> Polygon:
        if not 0 <= step < len(self.predicted_poses):
            raise IndexOutOfHorizon(
                f"step {step} outside {len(self.predicted_poses)} predicted poses"
            )
        return self.shape.transformed(Pose.from_array(self.predicted_poses[step]))


@dataclass(frozen=True, eq=False)
class EnvironmentSnapshot:
    """Frozen world state for one cycle.

    Step ``k`` of the dynamic predictions corresponds to absolute time
    ``timestamp + k * dt``; ``timestamp`` is the time of the plan's anchor
    pose.
    """

    driving_area: Polygon
    mode: DrivingMode
    ego_start: Pose
    footprint: FootprintModel
    dt: float
    static_obstacles: tuple[Polygon, ...] = ()
    dynamic_obstacles: tuple[DynamicObstacle, ...] = ()
    ego_prefix: tuple[Pose, ...] = ()
    timestamp: float = 0.0
    stop_lines: tuple[StopLine, ...] = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "static_obstacles", tuple(self.static_obstacles))
        object.__setattr__(self, "dynamic_obstacles", tuple(self.dynamic_obstacles))
        object.__setattr__(self, "ego_prefix", tuple(self.ego_prefix))
        if self.stop_lines is None:
            object.__setattr__(self, "stop_lines", tuple(self.mode.active_stop_lines(self.timestamp)))
        d = self.driving_area.signed_distance(
            np.array([[self.ego_start.x, self.ego_start.y]])
        )[0]
        if not d < 0:
            raise ValidationError(
                f"ego start ({self.ego_start.x:.3f}, {self.ego_start.y:.3f}) "
                "is not strictly inside the driving area"
            )

    @property
    def horizon(self) -> int:
        """Number of steps for which every obstacle is known."""
        if not self.dynamic_obstacles:
            return math.inf
        return min(len(d.predicted_poses) for d in self.dynamic_obstacles)

    @cached_property
    def centerline(self) -> Centerline:
        return Centerline.from_driving_area(self.driving_area)

    @cached_property
    def area_edges(self) -> EdgeSet:
        return EdgeSet([self.driving_area])

    @cached_property
    def static_edges(self) -> EdgeSet:
        return EdgeSet(self.static_obstacles)

    def dynamic_edges(self, steps: Sequence[int]) -> EdgeSet:
        """Edges of all dynamic obstacles, one placement per requested step."""
        steps = np.asarray(steps, dtype=int)
        if not self.dynamic_obstacles:
            return EdgeSet()
        if len(steps) and (steps.min() < 0 or steps.max() >= self.horizon):
            raise IndexOutOfHorizon(
                f"steps {steps.min()}..{steps.max()} exceed prediction horizon {self.horizon}"
            )
        a_parts, b_parts, sizes = [], [], []
        for dyn in self.dynamic_obstacles:
            poses = dyn.predicted_poses[steps]
            c = np.cos(poses[:, 2])[:, None]
            s = np.sin(poses[:, 2])[:, None]
            v = dyn.shape.vertices
            w = np.roll(v, -1, axis=0)

            def place(u):
                return np.stack([poses[:, 0:1] + c * u[:, 0] - s * u[:, 1],
                                 poses[:, 1:2] + s * u[:, 0] + c * u[:, 1]], axis=-1)

            a_parts.append(place(v))
            b_parts.append(place(w))
            sizes.append(len(v))
        starts = np.cumsum([0] + sizes[:-1])
        return EdgeSet(starts=starts, a=np.concatenate(a_parts, axis=1),
                       b=np.concatenate(b_parts, axis=1))

    @cached_property
    def stop_stations(self) -> np.ndarray:
        """Centerline stations of active stop lines that cross the driving area."""
        out = []
        for line in self.stop_lines:
            mid = line.midpoint
            if self.driving_area.signed_distance(mid[None, :])[0] > 0:
                continue
            station, _, _ = self.centerline.project(mid)
            out.append(float(station))
        return np.array(sorted(out))


def obstacles_at_step(snap: EnvironmentSnapshot, step: int) -> list[Polygon]:
    if step < 0 or step >= snap.horizon:
        raise IndexOutOfHorizon(f"step {step} outside horizon {snap.horizon}")
    return list(snap.static_obstacles) + [d.polygon_at(step) for d in snap.dynamic_obstacles]


@dataclass(frozen=True, eq=False)
class OccupancyGrid:
    origin: Pose
    resolution: float
    width: int
    height: int
    occupancy: np.ndarray

    def __post_init__(self):
        if not self.resolution > 0:
            raise ValidationError("grid resolution must be positive")
        if self.width < 1 or self.height < 1:
            raise ValidationError("grid dimensions must be at least 1")
        occ = np.asarray(self.occupancy, dtype=np.uint8).reshape(-1)
        if occ.size != self.width * self.height:
            raise ValidationError(
                f"grid has {occ.size} cells, expected {self.width} x {self.height}"
            )
        object.__setattr__(self, "occupancy", occ)

    def mask(self, threshold: int = 128) -> np.ndarray:
        """Occupied cells as a (height, width) boolean array; row index grows with y."""
        return self.occupancy.reshape(self.height, self.width) >= threshold

    def to_world(self, cols, rows) -> np.ndarray:
        """Grid-corner coordinates (in cells) to world coordinates."""
        c, s = math.cos(self.origin.theta), math.sin(self.origin.theta)
        u = np.asarray(cols, dtype=float) * self.resolution
        v = np.asarray(rows, dtype=float) * self.resolution
        return np.column_stack([self.origin.x + c * u - s * v, self.origin.y + s * u + c * v])


_EIGHT = np.ones((3, 3), dtype=bool)
# pinch vertices get split by this fraction of a cell so contours stay simple
_PINCH_NUDGE = 1e-3


def extract_obstacle_polygons(grid: OccupancyGrid, threshold: int = 128) -> list[Polygon]:
    """One counter-clockwise outline per 8-connected blob of occupied cells.

    Outlines follow cell boundaries. Where two cells of a blob touch only at a
    corner the outline passes the corner twice; both passes are shifted
    apart by a tiny amount into the free neighbours so the polygon is simple.
    Interior holes are not represented, so a blob lying inside another blob's
    hole is already covered by the outer outline and yields no polygon.
    """
    mask = grid.mask(threshold)
    labels, count = ndimage.label(mask, structure=_EIGHT)
    objects = ndimage.find_objects(labels)
    enclosed = set()
    for lab, sl in enumerate(objects, start=1):
        sub = labels[sl] == lab
        inner = ndimage.binary_fill_holes(sub) & ~sub
        if inner.any():
            enclosed.update(np.unique(labels[sl][inner]).tolist())
    enclosed.discard(0)
    polygons = []
    for lab, sl in enumerate(objects, start=1):
        if lab in enclosed:
            continue
        sub = labels[sl] == lab
        loop = _trace_outer(sub)
        loop[:, 0] += sl[1].start
        loop[:, 1] += sl[0].start
        polygons.append(Polygon(grid.to_world(loop[:, 0], loop[:, 1])))
    return polygons


def _trace_outer(m: np.ndarray) -> np.ndarray:
    """Outer boundary of a single 8-connected component, in cell-corner units."""
    h, w = m.shape
    pad = np.zeros((h + 2, w + 2), dtype=bool)
    pad[1:-1, 1:-1] = m
    core = pad[1:-1, 1:-1]
    out: dict[tuple[int, int], list[tuple[int, int]]] = {}

    def add(mask, dx0, dy0, dx1, dy1):
        rows, cols = np.nonzero(mask)
        for r, c in zip(rows.tolist(), cols.tolist()):
            out.setdefault((c + dx0, r + dy0), []).append((c + dx1, r + dy1))

    # occupied side kept on the left of every directed edge
    add(core & ~pad[:-2, 1:-1], 0, 0, 1, 0)   # bottom
    add(core & ~pad[1:-1, 2:], 1, 0, 1, 1)    # right
    add(core & ~pad[2:, 1:-1], 1, 1, 0, 1)    # top
    add(core & ~pad[1:-1, :-2], 0, 1, 0, 0)   # left

    # bottom-left corner of the lowest, leftmost cell is on the outer loop and never a pinch
    r0 = int(np.nonzero(m.any(axis=1))[0][0])
    c0 = int(np.nonzero(m[r0])[0][0])
    start = (c0, r0)
    verts = [(float(c0), float(r0))]
    prev, cur = start, (c0 + 1, r0)
    while cur != start:
        d_in = (cur[0] - prev[0], cur[1] - prev[1])
        options = out[cur]
        if len(options) == 1:
            nxt = options[0]
            if (nxt[0] - cur[0], nxt[1] - cur[1]) != d_in:
                verts.append((float(cur[0]), float(cur[1])))
        else:
            # diagonal pinch: the right turn keeps corner-touching cells together
            d_out = (d_in[1], -d_in[0])
            nxt = (cur[0] + d_out[0], cur[1] + d_out[1])
            nudge = (d_out[0] + d_out[1], d_out[1] - d_out[0])
            verts.append((cur[0] + _PINCH_NUDGE * nudge[0], cur[1] + _PINCH_NUDGE * nudge[1]))
        prev, cur = cur, nxt
    return np.array(verts, dtype=float)


def constant_velocity_poses(pose: Pose, velocity, dt: float, steps: int, t_offset: float = 0.0) -> np.ndarray:
    """Straight-line prediction: ``steps`` poses at ``t_offset + k * dt``."""
    t = t_offset + dt * np.arange(steps)
    vx, vy = float(velocity[0]), float(velocity[1])
    return np.column_stack([pose.x + vx * t, pose.y + vy * t, np.full(steps, pose.theta)])


def prefix_array(prefix: Sequence[Pose]) -> np.ndarray:
    return poses_to_array(prefix) if prefix else np.zeros((0, 3))
