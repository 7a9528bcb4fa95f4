"""Fitness and hard-constraint evaluation of candidate trajectories.

Everything is computed by :class:`BatchEvaluator` on stacked pose arrays of
shape (B, n, 3) so a whole swarm is scored with a handful of numpy calls.
:func:`evaluate_costs` and :func:`evaluate_constraints` run the same kernel
on a single trajectory.

Only samples that touch an optimizable pose are scored. For a trajectory
whose first free pose is ``k``: pose terms use poses ``i >= k``, a signal of
difference order ``d`` (speed 1, accel 2, jolt 3) uses samples ``i >= k - d``.
The prefix and frozen poses are fixed, so scoring them alone would only add
a constant (or make an already committed plan unfixable).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .environment import EnvironmentSnapshot
from .errors import HorizonMismatch, ValidationError
from .geometry import ObstacleField
from .trajectory import Trajectory, kinematic_signals

COST_TERMS = (
    "velocity",
    "acceleration",
    "jolt",
    "driving_area",
    "orientation",
    "yaw_rate",
    "halting",
    "obstacle_clearance",
    "lateral_bias",
)

CONSTRAINTS = (
    "clearance",
    "containment",
    "max_accel",
    "max_decel",
    "jolt",
    "yaw_rate",
    "steer_rate",
    "speed_limit",
)


@dataclass(frozen=True)
class CostWeights:
    velocity: float = 1.0
    acceleration: float = 1.0
    jolt: float = 1.0
    driving_area: float = 1.0
    orientation: float = 1.0
    yaw_rate: float = 1.0
    halting: float = 1.0
    obstacle_clearance: float = 1.0
    lateral_bias: float = 1.0

    def __post_init__(self):
        vals = self.as_array()
        if np.any(vals < 0) or not np.all(np.isfinite(vals)):
            raise ValidationError("cost weights must be finite and non-negative")
        if not np.any(vals > 0):
            raise ValidationError("at least one cost weight must be positive")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, t) for t in COST_TERMS], dtype=float)

    def scaled(self, c: float) -> "CostWeights":
        return CostWeights(**{k: v * c for k, v in asdict(self).items()})

    @classmethod
    def only(cls, **active) -> "CostWeights":
        base = {t: 0.0 for t in COST_TERMS}
        base.update(active)
        return cls(**base)


@dataclass(frozen=True)
class Limits:
    max_accel: float = 2.0
    max_decel: float = 3.0
    max_jolt: float = 2.0
    max_yaw_rate: float = 0.6
    max_steer_rate: float = 0.1
    min_clearance: float = 0.2

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (v > 0 and math.isfinite(v)):
                raise ValidationError(f"limit '{f.name}' must be finite and > 0, got {v}")


@dataclass(frozen=True)
class CostParameters:
    """Shape constants of the cost terms."""

    area_margin: float = 0.5       # m, driving-area comfort distance
    safe_distance: float = 0.5     # m, obstacle distance wanted at standstill
    safe_time_gap: float = 0.2     # s, extra obstacle distance per m/s
    halting_ramp: float = 30.0     # m, distance before a stop line where braking is rewarded

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (v >= 0 and math.isfinite(v)):
                raise ValidationError(f"cost parameter '{f.name}' must be finite and >= 0")
        if self.halting_ramp <= 0:
            raise ValidationError("halting_ramp must be positive")


@dataclass(frozen=True)
class CostBreakdown:
    raw: dict
    weighted: dict
    total: float

    @classmethod
    def from_raw(cls, raw: np.ndarray, weights: CostWeights) -> "CostBreakdown":
        w = raw * weights.as_array()
        return cls(dict(zip(COST_TERMS, raw.tolist())), dict(zip(COST_TERMS, w.tolist())),
                   float(w.sum()))


@dataclass(frozen=True)
class ConstraintReport:
    margins: dict

    @property
    def valid(self) -> bool:
        return all(m >= 0 for m in self.margins.values())

    def violated(self) -> list[str]:
        return [k for k, m in self.margins.items() if not m >= 0]


def _hinge2(x):
    return np.square(np.maximum(x, 0.0))


class BatchEvaluator:
    """Scores stacks of trajectories that share one template layout."""

    def __init__(self, snap: EnvironmentSnapshot, n_poses: int, prefix_len: int, first_free: int,
                 dt: float, weights: CostWeights, limits: Limits,
                 params: CostParameters | None = None):
        if abs(dt - snap.dt) > 1e-12:
            raise HorizonMismatch(f"trajectory dt {dt} differs from snapshot dt {snap.dt}")
        if not prefix_len < first_free < n_poses:
            raise HorizonMismatch("trajectory has no optimizable pose")
        last_step = n_poses - 1 - prefix_len
        if last_step >= snap.horizon:
            raise HorizonMismatch(
                f"trajectory reaches step {last_step} but predictions cover {snap.horizon} steps"
            )
        self.snap = snap
        self.n = n_poses
        self.prefix_len = prefix_len
        self.k = first_free
        self.dt = dt
        self.weights = weights
        self.w = weights.as_array()
        self.limits = limits
        self.params = params or CostParameters()
        self.fp = snap.footprint
        steps = np.arange(first_free, n_poses) - prefix_len
        self.dyn_edges = snap.dynamic_edges(steps)
        # beyond this distance no cost or constraint can react to an obstacle
        self.clear_cap = (self.params.safe_distance + self.params.safe_time_gap * snap.mode.speed_limit
                          + limits.min_clearance + 1.0)
        self.static = ObstacleField(snap.static_obstacles, self.clear_cap)
        # containment is only scored below area_margin, so deeper values may be clipped
        self.area = snap.driving_area.field(self.params.area_margin + float(self.fp.radii.max()) + 0.25)
        self.has_obstacles = len(self.static) + self.dyn_edges.n_polygons > 0

    def evaluate(self, poses: np.ndarray):
        """Return ``(margins, raw_costs)`` with shapes (B, 8) and (B, 9)."""
        poses = np.asarray(poses, dtype=float)
        if poses.ndim == 2:
            poses = poses[None]
        if poses.shape[1] != self.n:
            raise HorizonMismatch(f"expected {self.n} poses, got {poses.shape[1]}")
        B = poses.shape[0]
        k, dt, lim, par = self.k, self.dt, self.limits, self.params
        speed, accel, jolt, yaw_rate, kappa = kinematic_signals(poses, dt)
        sp = speed[:, k - 1:]
        ac = accel[:, max(k - 2, 0):]
        jo = jolt[:, max(k - 3, 0):]
        yr = yaw_rate[:, k - 1:]
        steer = np.diff(kappa, axis=-1)[:, max(k - 2, 0):] / dt

        fut = poses[:, k:]
        npose = fut.shape[1]
        # circle-major point order keeps the long pose axis innermost
        centers = self.fp.centers_by_circle(fut).reshape(B, -1, 2)
        radii = self.fp.radii[None, :, None]
        C = len(self.fp.radii)

        area_d = self.area.signed_distance(centers)
        contain = (-area_d.reshape(B, C, npose) - radii).min(axis=1)

        if self.has_obstacles:
            clear = np.full((B, npose), math.inf)
            if len(self.static):
                d = self.static.clearance(centers)
                clear = np.minimum(clear, (d.reshape(B, C, npose) - radii).min(axis=1))
            if self.dyn_edges.n_polygons:
                pts = np.swapaxes(centers.reshape(B, C, npose, 2), 0, 2).reshape(npose, -1, 2)
                d = self.dyn_edges.clearance(pts).reshape(npose, C, B).transpose(2, 1, 0)
                clear = np.minimum(clear, (d - radii).min(axis=1))
            np.minimum(clear, self.clear_cap, out=clear)
        else:
            clear = None

        margins = np.empty((B, len(CONSTRAINTS)))
        margins[:, 0] = math.inf if clear is None else clear.min(axis=1) - lim.min_clearance
        margins[:, 1] = contain.min(axis=1)
        margins[:, 2] = (lim.max_accel - ac).min(axis=1)
        margins[:, 3] = (ac + lim.max_decel).min(axis=1)
        margins[:, 4] = (lim.max_jolt - np.abs(jo)).min(axis=1)
        margins[:, 5] = (lim.max_yaw_rate - np.abs(yr)).min(axis=1)
        margins[:, 6] = (lim.max_steer_rate - np.abs(steer)).min(axis=1)
        margins[:, 7] = (self.snap.mode.speed_limit - sp).min(axis=1)

        mode = self.snap.mode
        station, lateral, lane_heading = self.snap.centerline.project(fut[..., :2])
        raw = np.empty((B, len(COST_TERMS)))
        raw[:, 0] = np.mean(np.square(sp - mode.desired_velocity), axis=1)
        raw[:, 1] = np.mean(np.square(ac / lim.max_accel), axis=1)
        raw[:, 2] = np.mean(np.square(jo / lim.max_jolt), axis=1)
        raw[:, 3] = np.mean(_hinge2(par.area_margin - contain), axis=1)
        raw[:, 4] = np.mean(1.0 - np.cos(fut[..., 2] - lane_heading), axis=1)
        raw[:, 5] = np.mean(np.square(yr / lim.max_yaw_rate), axis=1)
        raw[:, 6] = self._halting(poses, station, sp)
        if clear is None:
            raw[:, 7] = 0.0
        else:
            d_safe = par.safe_distance + par.safe_time_gap * sp
            raw[:, 7] = np.mean(_hinge2(d_safe - clear), axis=1)
        raw[:, 8] = np.mean(np.square(lateral - mode.lateral_bias), axis=1)
        return margins, raw

    def _halting(self, poses, station, sp):
        stops = self.snap.stop_stations
        if len(stops) == 0:
            return np.zeros(len(poses))
        front = self.fp.front_extent
        anchor = self.snap.centerline.project(poses[0, self.prefix_len, :2])[0]
        ahead = stops[stops >= anchor + front]
        if len(ahead) == 0:
            return np.zeros(len(poses))
        remaining = ahead[0] - (station + front)
        ramp = np.square(np.clip(1.0 - remaining / self.params.halting_ramp, 0.0, 1.0))
        return np.sum(np.square(sp) * ramp, axis=1)

    def fitness(self, raw: np.ndarray) -> np.ndarray:
        return (raw * self.w).sum(axis=-1)


def _evaluator(traj: Trajectory, snap, weights=None, limits=None, params=None) -> BatchEvaluator:
    return BatchEvaluator(snap, len(traj), traj.prefix_len, traj.first_free, traj.dt,
                          weights or CostWeights(), limits or Limits(), params)


def evaluate_costs(traj: Trajectory, snap: EnvironmentSnapshot, w: CostWeights,
                   params: CostParameters | None = None) -> CostBreakdown:
    _, raw = _evaluator(traj, snap, w, None, params).evaluate(traj.poses)
    return CostBreakdown.from_raw(raw[0], w)


def evaluate_constraints(traj: Trajectory, snap: EnvironmentSnapshot, lim: Limits) -> ConstraintReport:
    margins, _ = _evaluator(traj, snap, None, lim).evaluate(traj.poses)
    return ConstraintReport(dict(zip(CONSTRAINTS, margins[0].tolist())))
