import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from se2pso.control_space import (
    Control,
    ControlSequence,
    Pose,
    apply_control,
    controls_from_poses,
    interpolate_controls,
    inverse_control,
    poses_to_array,
    rollout,
    rollout_batch,
    wrap_angle,
)
from se2pso.errors import LengthMismatch, NotReachable, ZeroLengthRotation

coord = st.floats(-1e3, 1e3, allow_nan=False)
angle = st.floats(-math.pi, math.pi, allow_nan=False)
poses = st.builds(Pose, coord, coord, angle)
# |kappa * l| stays below pi so a step is never a full half turn or more
controls = st.tuples(st.floats(1e-3, 5.0), st.floats(-0.6, 0.6)).map(lambda t: Control(*t))


def close_pose(a: Pose, b: Pose, tol=1e-9):
    return (abs(a.x - b.x) <= tol and abs(a.y - b.y) <= tol
            and abs(wrap_angle(a.theta - b.theta)) <= tol)


def test_pose_heading_is_wrapped_into_half_open_interval():
    assert Pose(0, 0, -math.pi).theta == pytest.approx(math.pi)
    assert Pose(0, 0, 3 * math.pi).theta == pytest.approx(math.pi)
    assert Pose(0, 0, 2 * math.pi).theta == pytest.approx(0.0)


@pytest.mark.parametrize("p, c, expected", [
    (Pose(0, 0, 0), Control(1, 0), Pose(1, 0, 0)),
    (Pose(0, 0, 0), Control(1, math.pi), Pose(0, 1, math.pi)),
    (Pose(2, 1, math.pi / 2), Control(1, 0), Pose(2, 2, math.pi / 2)),
])
def test_apply_control_examples(p, c, expected):
    assert close_pose(apply_control(p, c), expected, 1e-12)


def test_control_rejects_negative_length():
    with pytest.raises(ValueError):
        Control(-0.1, 0.0)
    with pytest.raises(ValueError):
        Control(1.0, math.inf)


def test_rollout_straight_steps():
    out = rollout(Pose(0, 0, 0), ControlSequence([1, 1], [0, 0], 0.3))
    assert [(p.x, p.y, p.theta) for p in out] == [(0, 0, 0), (1, 0, 0), (2, 0, 0)]


def test_two_half_turns_wrap_back_to_zero_heading():
    out = rollout(Pose(0, 0, 0), ControlSequence.constant(1.0, math.pi, 2, 0.3))
    assert len(out) == 3
    assert abs(wrap_angle(out[2].theta)) < 1e-12
    # second half turn brings the vehicle back to the origin
    assert math.hypot(out[2].x, out[2].y) < 1e-12


def test_rollout_rejects_empty_sequence():
    with pytest.raises(ValueError):
        rollout(Pose(0, 0, 0), ControlSequence([], [], 0.3))


@pytest.mark.parametrize("a, b, expected", [
    (Pose(0, 0, 0), Pose(1, 0, 0), (1.0, 0.0)),
    (Pose(0, 0, 0), Pose(0, 1, math.pi), (1.0, math.pi)),
])
def test_inverse_control_examples(a, b, expected):
    c = inverse_control(a, b)
    assert c.l == pytest.approx(expected[0], abs=1e-12)
    assert c.kappa == pytest.approx(expected[1], abs=1e-12)


def test_sideways_step_is_not_reachable():
    with pytest.raises(NotReachable):
        inverse_control(Pose(0, 0, 0), Pose(0, 1, 0))


def test_rotation_in_place_is_rejected_and_standstill_is_zero():
    with pytest.raises(ZeroLengthRotation):
        inverse_control(Pose(1, 1, 0), Pose(1, 1, 0.5))
    c = inverse_control(Pose(1, 1, 0.2), Pose(1, 1, 0.2))
    assert (c.l, c.kappa) == (0.0, 0.0)


def test_interpolation_examples():
    a = ControlSequence.constant(1.0, 1.0, 24, 0.3)
    b = ControlSequence.constant(3.0, -0.3, 24, 0.3)
    assert interpolate_controls(a, b, 0.0) == a
    assert interpolate_controls(a, b, 1.0) == b
    q = interpolate_controls(a, b, 0.25)
    np.testing.assert_allclose(q.lengths, 1.5, atol=1e-15)


def test_interpolation_length_mismatch():
    a = ControlSequence.constant(1.0, 0.0, 3, 0.3)
    with pytest.raises(LengthMismatch):
        interpolate_controls(a, ControlSequence.constant(1.0, 0.0, 4, 0.3), 0.5)
    with pytest.raises(LengthMismatch):
        interpolate_controls(a, ControlSequence.constant(1.0, 0.0, 3, 0.1), 0.5)


def test_sequence_vector_round_trip():
    seq = ControlSequence([1, 2, 3], [0.1, -0.2, 0.3], 0.3)
    np.testing.assert_array_equal(seq.as_vector(), [1, 0.1, 2, -0.2, 3, 0.3])
    assert ControlSequence.from_vector(seq.as_vector(), 0.3) == seq


@given(poses, controls)
def test_round_trip_inverse_of_apply(p, c):
    back = inverse_control(p, apply_control(p, c))
    assert abs(back.l - c.l) <= 1e-9
    assert abs(back.kappa - c.kappa) <= 1e-9


@given(poses, controls)
def test_apply_of_inverse_reproduces_target(p, c):
    q = apply_control(p, c)
    assert close_pose(apply_control(p, inverse_control(p, q)), q)


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0, 1))
def test_interpolation_preserves_constant_curvature(ka, kb, alpha):
    a = ControlSequence.constant(1.0, ka, 10, 0.3)
    b = ControlSequence.constant(2.0, kb, 10, 0.3)
    k = interpolate_controls(a, b, alpha).curvatures
    assert np.ptp(k) == 0.0
    assert k[0] == pytest.approx((1 - alpha) * ka + alpha * kb, abs=1e-15)


@given(poses, poses, st.lists(controls, min_size=1, max_size=12))
def test_left_invariance(p0, g, ctrl):
    seq = ControlSequence.from_controls(ctrl, 0.3)
    base = rollout(Pose(0, 0, 0), seq)
    start = Pose(p0.x, p0.y, p0.theta)
    moved = rollout(start, seq)
    c, s = math.cos(start.theta), math.sin(start.theta)
    for a, b in zip(base, moved):
        expect = Pose(start.x + c * a.x - s * a.y, start.y + s * a.x + c * a.y, start.theta + a.theta)
        assert close_pose(b, expect, 1e-9 * max(1.0, abs(start.x) + abs(start.y)))


@given(poses, st.lists(controls, min_size=1, max_size=12))
def test_step_direction_is_half_the_heading_change(p0, ctrl):
    out = rollout(p0, ControlSequence.from_controls(ctrl, 0.3))
    for a, b in zip(out, out[1:]):
        direction = math.atan2(b.y - a.y, b.x - a.x)
        half = a.theta + 0.5 * wrap_angle(b.theta - a.theta)
        assert abs(wrap_angle(direction - half)) < 1e-6


@given(poses, st.lists(controls, min_size=1, max_size=20))
def test_batch_rollout_matches_scalar_rollout(p0, ctrl):
    seq = ControlSequence.from_controls(ctrl, 0.3)
    ref = poses_to_array(rollout(p0, seq))[1:]
    got = rollout_batch(p0.as_array(), seq.as_vector().reshape(-1, 2))
    np.testing.assert_allclose(got[:, :2], ref[:, :2], atol=1e-9)
    np.testing.assert_allclose(wrap_angle(got[:, 2] - ref[:, 2]), 0.0, atol=1e-9)
    back = controls_from_poses(np.vstack([p0.as_array(), got]))
    np.testing.assert_allclose(back, seq.as_vector().reshape(-1, 2), atol=1e-9)
