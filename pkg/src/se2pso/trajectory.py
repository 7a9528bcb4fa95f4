"""Time-stamped trajectories with a past prefix and a frozen near-term horizon.

Pose layout of a :class:`Trajectory` with ``n`` poses::

    [ prefix (past) | anchor | frozen ... | optimizable ... ]
      0..p-1          p        p+1..p+f     p+f+1..n-1

The anchor is the pose the current plan starts from. Prefix and frozen poses
are never touched by the optimizer; the frozen ones are copied bit-for-bit
from the previous plan.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .control_space import DEGENERATE_LENGTH, Pose, controls_from_poses, poses_to_array, rollout_batch, wrap_angle
from .errors import HorizonExhausted, TooShort

# slack for float rounding when mapping absolute times onto the step grid
_GRID_EPS = 1e-9


@dataclass(frozen=True, eq=False)
class Trajectory:
    poses: np.ndarray
    dt: float
    t0: float = 0.0
    prefix_len: int = 0
    frozen_len: int = 0

    def __post_init__(self):
        poses = np.array(self.poses, dtype=float)
        if poses.ndim != 2 or poses.shape[1] != 3:
            raise ValueError(f"poses must have shape (n, 3), got {poses.shape}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.prefix_len < 0 or self.frozen_len < 0:
            raise ValueError("prefix_len and frozen_len must be non-negative")
        if len(poses) < self.prefix_len + self.frozen_len + 2:
            raise ValueError(
                f"{len(poses)} poses leave no optimizable step "
                f"(prefix {self.prefix_len}, frozen {self.frozen_len})"
            )
        poses[:, 2] = wrap_angle(poses[:, 2])
        if not np.all(np.isfinite(poses)):
            raise ValueError("poses must be finite")
        poses.flags.writeable = False
        object.__setattr__(self, "poses", poses)

    @classmethod
    def from_poses(cls, poses: Sequence[Pose], dt: float, t0: float = 0.0,
                   prefix_len: int = 0, frozen_len: int = 0) -> "Trajectory":
        return cls(poses_to_array(poses), dt, t0, prefix_len, frozen_len)

    def __len__(self) -> int:
        return len(self.poses)

    @property
    def anchor_index(self) -> int:
        return self.prefix_len

    @property
    def first_free(self) -> int:
        """Index of the first pose the optimizer may change."""
        return self.prefix_len + 1 + self.frozen_len

    @property
    def horizon_steps(self) -> int:
        """Number of future steps after the anchor."""
        return len(self.poses) - self.prefix_len - 1

    @property
    def timestamps(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self.poses))

    def time_of(self, index: int) -> float:
        return self.t0 + index * self.dt

    def pose(self, index: int) -> Pose:
        return Pose.from_array(self.poses[index])

    def pose_list(self) -> list[Pose]:
        return [Pose.from_array(p) for p in self.poses]

    def free_controls(self) -> np.ndarray:
        """(l, kappa) of every optimizable step, shape (m, 2)."""
        return controls_from_poses(self.poses[self.first_free - 1:])

    def with_free_controls(self, controls: np.ndarray) -> "Trajectory":
        """Replace the optimizable tail by a rollout of ``controls`` from the last fixed pose."""
        k = self.first_free
        controls = np.asarray(controls, dtype=float)
        if len(controls) != len(self.poses) - k:
            raise ValueError(f"expected {len(self.poses) - k} controls, got {len(controls)}")
        tail = rollout_batch(self.poses[k - 1], controls)
        return Trajectory(np.vstack([self.poses[:k], tail]), self.dt, self.t0,
                          self.prefix_len, self.frozen_len)


@dataclass(frozen=True)
class KinematicProfile:
    speed: np.ndarray
    accel: np.ndarray
    jolt: np.ndarray
    yaw_rate: np.ndarray
    curvature: np.ndarray


def kinematic_signals(poses: np.ndarray, dt: float):
    """Finite-difference signals of a pose array of shape (..., n, 3).

    Returns ``(speed, accel, jolt, yaw_rate, curvature)``; sample ``i`` of a
    signal of order ``k`` spans poses ``i .. i + k``.

    Curvature is undefined while standing still; such steps keep the last
    defined value (0 before any motion), like a parked car keeps its wheel
    angle.
    """
    d = np.diff(poses, axis=-2)
    l = np.hypot(d[..., 0], d[..., 1])
    dtheta = wrap_angle(d[..., 2])
    moving = l >= DEGENERATE_LENGTH
    with np.errstate(divide="ignore", invalid="ignore"):
        kappa = np.where(moving, dtheta / l, 0.0)
    if not moving.all():
        idx = np.where(moving, np.arange(l.shape[-1]), 0)
        np.maximum.accumulate(idx, axis=-1, out=idx)
        kappa = np.where(moving[..., :1] | (idx > 0), np.take_along_axis(kappa, idx, axis=-1), 0.0)
    speed = l / dt
    accel = np.diff(speed, axis=-1) / dt
    jolt = np.diff(accel, axis=-1) / dt
    return speed, accel, jolt, dtheta / dt, kappa


def derive_kinematics(traj: Trajectory) -> KinematicProfile:
    if len(traj) < 4:
        raise TooShort(f"need at least 4 poses for jolt, got {len(traj)}")
    return KinematicProfile(*kinematic_signals(traj.poses, traj.dt))


def truncate_and_freeze(prev: Trajectory, now: float, freeze_duration: float,
                        prefix_len: int | None = None) -> Trajectory:
    """Re-anchor ``prev`` at ``now`` and freeze the poses covering ``[now, now + freeze]``.

    The new anchor is the last pose at or before ``now``. The following
    ``ceil((now + freeze_duration - t_anchor) / dt)`` poses become frozen; on
    a grid-aligned ``now`` that is ``ceil(freeze_duration / dt)``. Nothing is
    recomputed: every returned pose is a verbatim copy from ``prev``.
    """
    if freeze_duration < 0:
        raise ValueError("freeze_duration must be >= 0")
    p = prev.prefix_len if prefix_len is None else prefix_len
    c = math.floor((now - prev.t0) / prev.dt + _GRID_EPS)
    if c < p:
        raise HorizonExhausted(f"previous trajectory has no {p}-pose prefix before t={now}")
    t_anchor = prev.t0 + c * prev.dt
    frozen = max(0, math.ceil((now + freeze_duration - t_anchor) / prev.dt - _GRID_EPS))
    if len(prev) - c < frozen + 2:
        raise HorizonExhausted(
            f"previous trajectory ends at t={prev.time_of(len(prev) - 1):.3f}, "
            f"cannot cover freeze window to t={now + freeze_duration:.3f} plus one free step"
        )
    start = c - p
    return Trajectory(prev.poses[start:], prev.dt, prev.t0 + start * prev.dt, p, frozen)


def extend_to_horizon(traj: Trajectory, horizon_steps: int) -> Trajectory:
    """Pad (repeating the last control) or cut the future part to ``horizon_steps`` steps."""
    target = traj.prefix_len + 1 + horizon_steps
    n = len(traj)
    if target < traj.first_free + 1:
        raise HorizonExhausted("horizon shorter than the frozen window")
    if n >= target:
        poses = traj.poses[:target]
    else:
        last = controls_from_poses(traj.poses[-2:])[0]
        tail = rollout_batch(traj.poses[-1], np.tile(last, (target - n, 1)))
        poses = np.vstack([traj.poses, tail])
    return Trajectory(poses, traj.dt, traj.t0, traj.prefix_len, traj.frozen_len)


def interpolate_pose(traj: Trajectory, t: float) -> Pose:
    """Pose at absolute time ``t`` by linear blending of the bracketing poses."""
    u = (t - traj.t0) / traj.dt
    if u < -_GRID_EPS or u > len(traj) - 1 + _GRID_EPS:
        raise HorizonExhausted(f"t={t} outside trajectory time span")
    i = min(max(math.floor(u + _GRID_EPS), 0), len(traj) - 1)
    frac = u - i
    if i == len(traj) - 1 or frac <= _GRID_EPS:
        return Pose.from_array(traj.poses[i])
    a, b = traj.poses[i], traj.poses[i + 1]
    return Pose(
        a[0] + frac * (b[0] - a[0]),
        a[1] + frac * (b[1] - a[1]),
        a[2] + frac * wrap_angle(b[2] - a[2]),
    )


DUMP_HEADER = ["index", "t_abs_s", "x_m", "y_m", "theta_rad", "frozen_flag"]


def dump_trajectory(traj: Trajectory) -> str:
    """CSV text, one row per pose. ``frozen_flag`` marks the frozen future poses."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DUMP_HEADER)
    lo, hi = traj.anchor_index + 1, traj.first_free
    for i, (x, y, th) in enumerate(traj.poses):
        w.writerow([i, repr(float(traj.time_of(i))), repr(float(x)), repr(float(y)),
                    repr(float(th)), int(lo <= i < hi)])
    return buf.getvalue()


def read_trajectory_dump(text: str, prefix_len: int = 0) -> Trajectory:
    rows = list(csv.DictReader(io.StringIO(text)))
    if len(rows) < 2:
        raise ValueError("trajectory dump needs at least two rows")
    t = [float(r["t_abs_s"]) for r in rows]
    poses = [[float(r["x_m"]), float(r["y_m"]), float(r["theta_rad"])] for r in rows]
    frozen = sum(int(r["frozen_flag"]) for r in rows)
    return Trajectory(np.array(poses), t[1] - t[0], t[0], prefix_len, frozen)
