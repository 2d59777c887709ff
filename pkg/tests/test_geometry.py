import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wipesim.geometry import (
    Pose,
    Twist,
    UnitQuaternion,
    integrate_pose,
    pose_error,
    quat_exp,
    quat_log,
)

RT2 = math.sqrt(2.0) / 2.0


def random_unit_quaternions(n, seed=0):
    rng = np.random.default_rng(seed)
    raw = rng.normal(size=(n, 4))
    return [UnitQuaternion(*row) for row in raw]


class TestQuatLog:
    def test_identity_maps_to_zero(self):
        assert np.array_equal(quat_log(UnitQuaternion()), np.zeros(3))

    def test_quarter_turn_about_z(self):
        # 90 deg about z has half-angle pi/4; verified by the exp roundtrip below.
        q = UnitQuaternion(RT2, 0.0, 0.0, RT2)
        r = quat_log(q)
        np.testing.assert_allclose(r, [0.0, 0.0, math.pi / 4], atol=1e-15)
        rq = quat_exp(r)
        np.testing.assert_allclose(rq.as_array(), q.as_array(), atol=1e-15)

    def test_double_cover_collapses(self):
        q = UnitQuaternion(0.3, 0.1, -0.4, 0.8)
        q_neg = UnitQuaternion(-0.3, -0.1, 0.4, -0.8)
        np.testing.assert_array_equal(quat_log(q), quat_log(q_neg))


class TestQuatExp:
    def test_zero_maps_to_identity(self):
        q = quat_exp(np.zeros(3))
        assert q.w == 1.0 and q.x == q.y == q.z == 0.0

    def test_half_angle_construction(self):
        q = quat_exp(np.array([0.0, 0.0, math.pi / 4]))
        np.testing.assert_allclose(q.as_array(), [RT2, 0.0, 0.0, RT2], atol=1e-15)

    def test_roundtrip_1000_random(self):
        for q in random_unit_quaternions(1000, seed=42):
            back = quat_exp(quat_log(q))
            np.testing.assert_allclose(back.as_array(), q.as_array(), atol=1e-12)

    def test_series_branch_tiny_rotation(self):
        # Below the series threshold, log returns an exact zero vector.
        r = np.array([1e-13, 0.0, 0.0])
        q = quat_exp(r)
        assert abs(q.norm() - 1.0) < 1e-15
        assert np.array_equal(quat_log(q), np.zeros(3))


class TestPoseError:
    def test_identical_poses_zero_error(self):
        pose = Pose(np.array([0.1, -0.2, 0.3]), UnitQuaternion(0.9, 0.1, 0.2, 0.3))
        err = pose_error(pose, pose)
        assert np.array_equal(err.p, np.zeros(3))
        assert np.array_equal(err.q, np.zeros(3))

    def test_pure_translation(self):
        q = UnitQuaternion(0.7, 0.0, 0.7, 0.1)
        desired = Pose(np.array([0.1, 0.0, 0.0]), q)
        actual = Pose(np.zeros(3), q)
        err = pose_error(desired, actual)
        np.testing.assert_allclose(err.p, [0.1, 0.0, 0.0])
        np.testing.assert_allclose(err.q, np.zeros(3), atol=1e-15)

    def test_quarter_turn_orientation_error(self):
        desired = Pose(np.zeros(3), UnitQuaternion(RT2, 0.0, 0.0, RT2))
        actual = Pose(np.zeros(3), UnitQuaternion())
        err = pose_error(desired, actual)
        np.testing.assert_allclose(err.q, [0.0, 0.0, math.pi / 4], atol=1e-15)

    def test_translation_antisymmetry(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            a = Pose(rng.normal(size=3), UnitQuaternion(*rng.normal(size=4)))
            b = Pose(rng.normal(size=3), UnitQuaternion(*rng.normal(size=4)))
            np.testing.assert_array_equal(
                pose_error(a, b).p, -pose_error(b, a).p
            )


class TestIntegratePose:
    def test_zero_twist_is_identity(self):
        pose = Pose(np.array([1.0, 2.0, 3.0]), UnitQuaternion(0.5, 0.5, 0.5, 0.5))
        out = integrate_pose(pose, Twist(), 0.01)
        np.testing.assert_array_equal(out.p, pose.p)
        assert out.q == pose.q

    def test_quarter_turn_in_half_second(self):
        # omega = pi rad/s about z for 0.5 s is a 90 deg rotation.
        out = integrate_pose(Pose(), Twist(w=np.array([0.0, 0.0, math.pi])), 0.5)
        expected = quat_exp(np.array([0.0, 0.0, math.pi / 4]))
        np.testing.assert_allclose(out.q.as_array(), expected.as_array(), atol=1e-14)

    def test_norm_drift_over_many_steps(self):
        rng = np.random.default_rng(3)
        pose = Pose()
        for _ in range(10_000):
            tw = Twist(rng.normal(size=3), rng.normal(size=3))
            pose = integrate_pose(pose, tw, 1e-3)
        assert abs(pose.q.norm() - 1.0) < 1e-9


@settings(max_examples=200, deadline=None)
@given(st.tuples(*[st.floats(-1, 1) for _ in range(4)]))
def test_property_exp_log_roundtrip(wxyz):
    w, x, y, z = wxyz
    if w * w + x * x + y * y + z * z < 1e-6:
        return
    q = UnitQuaternion(w, x, y, z)
    back = quat_exp(quat_log(q))
    if abs(q.w) > 1e-9:
        assert np.allclose(back.as_array(), q.as_array(), atol=1e-12)
    else:
        # pi rotations: q and -q are the same rotation and w's sign is noise,
        # so the roundtrip is only defined up to the double cover.
        delta = min(
            np.max(np.abs(back.as_array() - q.as_array())),
            np.max(np.abs(back.as_array() + q.as_array())),
        )
        assert delta <= 1e-12


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3))
def test_property_pose_error_self_is_zero(p):
    pose = Pose(np.array(p), UnitQuaternion(0.2, -0.4, 0.1, 0.88))
    err = pose_error(pose, pose)
    assert np.array_equal(err.as_array(), np.zeros(6))


def test_quaternion_rejects_zero_norm():
    with pytest.raises(ValueError):
        UnitQuaternion(0.0, 0.0, 0.0, 0.0)
