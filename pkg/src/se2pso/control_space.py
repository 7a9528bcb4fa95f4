"""SE2 poses, the polar (length, curvature) control model and rollouts.

A control ``(l, kappa)`` moves a pose by the body-frame offset

    (l * cos(kappa * l / 2), l * sin(kappa * l / 2), kappa * l)

so ``l`` is the chord of a circular arc with curvature ``kappa``. All angles
are radians, poses keep their heading in (-pi, pi].
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import LengthMismatch, NotReachable, ZeroLengthRotation

TWO_PI = 2.0 * math.pi

# inverse kinematics thresholds
DEGENERATE_LENGTH = 1e-6
DEGENERATE_ROTATION = 1e-6
DIRECTION_TOLERANCE = 1e-6


def wrap_angle(angle):
    """Map an angle (scalar or array) into (-pi, pi].

    Values already in range are returned unchanged, bit for bit.
    """
    if isinstance(angle, np.ndarray):
        inside = (angle > -math.pi) & (angle <= math.pi)
        return np.where(inside, angle, math.pi - np.mod(math.pi - angle, TWO_PI))
    if -math.pi < angle <= math.pi:
        return angle
    return math.pi - (math.pi - angle) % TWO_PI


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])

    @classmethod
    def from_array(cls, a) -> "Pose":
        return cls(float(a[0]), float(a[1]), float(a[2]))


@dataclass(frozen=True)
class Control:
    l: float
    kappa: float = 0.0

    def __post_init__(self):
        if not (self.l >= 0.0) or not math.isfinite(self.l):
            raise ValueError(f"control length must be finite and >= 0, got {self.l}")
        if not math.isfinite(self.kappa):
            raise ValueError(f"curvature must be finite, got {self.kappa}")

    @property
    def heading_change(self) -> float:
        return self.kappa * self.l


class ControlSequence:
    """An ordered run of controls with a uniform time step.

    Stored as two read-only float arrays so the optimizer can treat a
    sequence as a flat vector ``[l0, k0, l1, k1, ...]``.
    """

    __slots__ = ("_lengths", "_curvatures", "dt")

    def __init__(self, lengths, curvatures, dt: float):
        lengths = np.array(lengths, dtype=float)
        curvatures = np.array(curvatures, dtype=float)
        if lengths.ndim != 1 or lengths.shape != curvatures.shape:
            raise ValueError("lengths and curvatures must be 1-D arrays of equal length")
        if np.any(lengths < 0.0) or not np.all(np.isfinite(lengths)):
            raise ValueError("control lengths must be finite and >= 0")
        if not np.all(np.isfinite(curvatures)):
            raise ValueError("curvatures must be finite")
        if not dt > 0.0:
            raise ValueError(f"dt must be positive, got {dt}")
        lengths.flags.writeable = False
        curvatures.flags.writeable = False
        self._lengths = lengths
        self._curvatures = curvatures
        self.dt = float(dt)

    @classmethod
    def from_controls(cls, controls: Iterable[Control], dt: float) -> "ControlSequence":
        controls = list(controls)
        return cls([c.l for c in controls], [c.kappa for c in controls], dt)

    @classmethod
    def constant(cls, l: float, kappa: float, count: int, dt: float) -> "ControlSequence":
        return cls(np.full(count, l), np.full(count, kappa), dt)

    @classmethod
    def from_vector(cls, vec, dt: float) -> "ControlSequence":
        pairs = np.asarray(vec, dtype=float).reshape(-1, 2)
        return cls(pairs[:, 0], pairs[:, 1], dt)

    @property
    def lengths(self) -> np.ndarray:
        return self._lengths

    @property
    def curvatures(self) -> np.ndarray:
        return self._curvatures

    def as_vector(self) -> np.ndarray:
        """Flattened ``(l, kappa)`` pairs."""
        return np.column_stack([self._lengths, self._curvatures]).ravel()

    def __len__(self) -> int:
        return len(self._lengths)

    def __getitem__(self, i: int) -> Control:
        return Control(float(self._lengths[i]), float(self._curvatures[i]))

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other) -> bool:
        if not isinstance(other, ControlSequence):
            return NotImplemented
        return (
            self.dt == other.dt
            and np.array_equal(self._lengths, other._lengths)
            and np.array_equal(self._curvatures, other._curvatures)
        )

    def __repr__(self) -> str:
        return f"ControlSequence(n={len(self)}, dt={self.dt})"


def apply_control(p: Pose, c: Control) -> Pose:
    """Transition function: move ``p`` by one polar control."""
    dtheta = c.kappa * c.l
    heading = p.theta + 0.5 * dtheta
    return Pose(
        p.x + c.l * math.cos(heading),
        p.y + c.l * math.sin(heading),
        p.theta + dtheta,
    )


def rollout(p0: Pose, seq: ControlSequence) -> list[Pose]:
    """Poses visited by applying ``seq`` from ``p0``; ``len(seq) + 1`` entries."""
    if len(seq) == 0:
        raise ValueError("control sequence is empty")
    poses = [p0]
    for c in seq:
        poses.append(apply_control(poses[-1], c))
    return poses


def inverse_control(p_t: Pose, p_next: Pose) -> Control:
    """Recover the single control that maps ``p_t`` onto ``p_next``.

    Raises
    ------
    NotReachable
        The displacement direction in the body frame of ``p_t`` is not half
        the heading change, so no polar control connects the poses.
    ZeroLengthRotation
        The poses coincide in position but differ in heading.
    """
    dx = p_next.x - p_t.x
    dy = p_next.y - p_t.y
    l = math.hypot(dx, dy)
    dtheta = wrap_angle(p_next.theta - p_t.theta)
    if l < DEGENERATE_LENGTH:
        if abs(dtheta) < DEGENERATE_ROTATION:
            return Control(0.0, 0.0)
        raise ZeroLengthRotation(
            f"rotation of {dtheta:.3g} rad without displacement is not representable"
        )
    c, s = math.cos(p_t.theta), math.sin(p_t.theta)
    direction = math.atan2(-s * dx + c * dy, c * dx + s * dy)
    mismatch = wrap_angle(direction - 0.5 * dtheta)
    if abs(mismatch) > DIRECTION_TOLERANCE:
        raise NotReachable(
            f"body-frame direction {direction:.6g} rad does not match half the "
            f"heading change {0.5 * dtheta:.6g} rad"
        )
    return Control(l, dtheta / l)


def interpolate_controls(a: ControlSequence, b: ControlSequence, alpha: float) -> ControlSequence:
    """Element-wise affine blend of two control sequences."""
    if len(a) != len(b):
        raise LengthMismatch(f"sequences have {len(a)} and {len(b)} controls")
    if a.dt != b.dt:
        raise LengthMismatch(f"sequences use different time steps ({a.dt} vs {b.dt})")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if alpha == 0.0:
        return a
    if alpha == 1.0:
        return b
    return ControlSequence(
        (1.0 - alpha) * a.lengths + alpha * b.lengths,
        (1.0 - alpha) * a.curvatures + alpha * b.curvatures,
        a.dt,
    )


def rollout_batch(start: np.ndarray, controls: np.ndarray) -> np.ndarray:
    """Vectorized rollout.

    ``start`` has shape (..., 3), ``controls`` has shape (..., m, 2). Returns
    the m poses *after* the start, shape (..., m, 3). Row ``i`` of the output
    depends only on row ``i`` of the inputs.
    """
    l = controls[..., 0]
    dtheta = controls[..., 1] * l
    theta0 = start[..., 2:3]
    cum = np.cumsum(dtheta, axis=-1)
    heading = theta0 + (cum - 0.5 * dtheta)
    x = start[..., 0:1] + np.cumsum(l * np.cos(heading), axis=-1)
    y = start[..., 1:2] + np.cumsum(l * np.sin(heading), axis=-1)
    theta = wrap_angle(theta0 + cum)
    return np.stack([x, y, theta], axis=-1)


def controls_from_poses(poses: np.ndarray) -> np.ndarray:
    """Chord length and curvature of each consecutive pose pair, shape (..., n-1, 2).

    This is the unchecked, vectorized inverse used for signal extraction:
    steps shorter than the degeneracy threshold get zero curvature.
    """
    d = np.diff(poses[..., :2], axis=-2)
    l = np.hypot(d[..., 0], d[..., 1])
    dtheta = wrap_angle(np.diff(poses[..., 2], axis=-1))
    safe = np.where(l < DEGENERATE_LENGTH, 1.0, l)
    kappa = np.where(l < DEGENERATE_LENGTH, 0.0, dtheta / safe)
    return np.stack([l, kappa], axis=-1)


def poses_to_array(poses: Sequence[Pose]) -> np.ndarray:
    return np.array([[p.x, p.y, p.theta] for p in poses], dtype=float)
