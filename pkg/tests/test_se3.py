import math

import numpy as np
import pytest

from kinetocomp.errors import BranchError, NonCanonical
from kinetocomp.se3 import (
    Pose,
    Twist,
    Wrench,
    apply_twist,
    compose,
    inverse,
    pose_delta,
    transport_wrench,
    twist_norm,
)

from oracles import hom_from_pose, pose_from_hom, random_pose, random_twist


def assert_pose_close(a: Pose, b: Pose, tol=1e-12):
    assert np.allclose(a.position, b.position, atol=tol)
    assert np.allclose(a.rotvec, b.rotvec, atol=tol)


def test_compose_identity():
    rng = np.random.default_rng(1)
    p = random_pose(rng)
    assert_pose_close(compose(Pose.identity(), p), p)
    assert_pose_close(compose(p, Pose.identity()), p)


def test_compose_inverse_is_identity():
    rng = np.random.default_rng(2)
    for _ in range(50):
        p = random_pose(rng)
        assert_pose_close(compose(p, inverse(p)), Pose.identity())


def test_compose_matches_matrix_oracle():
    # rot_z(90 deg) at (1,0,0), then translate (1,0,0): lands at (1,1,0).
    a = Pose([1.0, 0.0, 0.0], [0.0, 0.0, math.pi / 2.0])
    b = Pose([1.0, 0.0, 0.0], [0.0, 0.0, 0.0])
    got = compose(a, b)
    assert np.allclose(got.position, [1.0, 1.0, 0.0], atol=1e-15)
    assert np.allclose(got.rotvec, [0.0, 0.0, math.pi / 2.0], atol=1e-15)

    rng = np.random.default_rng(3)
    for _ in range(100):
        pa, pb = random_pose(rng), random_pose(rng)
        want = pose_from_hom(hom_from_pose(pa) @ hom_from_pose(pb))
        assert_pose_close(compose(pa, pb), want, tol=1e-12)


def test_group_laws_random():
    rng = np.random.default_rng(4)
    for _ in range(1000):
        a, b, c = (random_pose(rng, 0.3, 0.4) for _ in range(3))
        try:
            left = compose(compose(a, b), c)
            right = compose(a, compose(b, c))
        except NonCanonical:
            continue  # composition wandered past the branch; not a group-law failure
        assert_pose_close(left, right, tol=1e-12)
        assert_pose_close(compose(a, inverse(a)), Pose.identity(), tol=1e-12)


def test_apply_twist_trivial_cases():
    rng = np.random.default_rng(5)
    p = random_pose(rng)
    assert_pose_close(apply_twist(p, Twist.zero()), p)
    moved = apply_twist(Pose.identity(), Twist([1.0, 2.0, 3.0], [0.0, 0.0, 0.0]))
    assert np.allclose(moved.position, [1.0, 2.0, 3.0])
    assert np.allclose(moved.rotvec, 0.0)


def test_apply_twist_pose_delta_round_trip():
    rng = np.random.default_rng(6)
    for _ in range(200):
        p = random_pose(rng)
        d = random_twist(rng, 1e-3, 1e-3)
        q = apply_twist(p, d)
        back = pose_delta(p, q)
        assert np.allclose(back.as_array(), d.as_array(), atol=1e-10)
        assert_pose_close(apply_twist(p, pose_delta(p, q)), q, tol=1e-10)


def test_pose_delta_trivial():
    rng = np.random.default_rng(7)
    p = random_pose(rng)
    assert np.allclose(pose_delta(p, p).as_array(), 0.0)
    d = pose_delta(Pose.identity(), Pose([1e-3, 0, 0], [0, 0, 0]))
    assert np.allclose(d.as_array(), [1e-3, 0, 0, 0, 0, 0])


def test_pose_delta_antisymmetry():
    rng = np.random.default_rng(8)
    for _ in range(100):
        a = random_pose(rng)
        b = apply_twist(a, random_twist(rng, 1e-3, 1e-3))
        fwd = pose_delta(a, b).as_array()
        bwd = pose_delta(b, a).as_array()
        assert np.allclose(fwd, -bwd, atol=1e-6 * max(1.0, np.linalg.norm(fwd)))


def test_apply_twist_branch_crossing_raises():
    p = Pose([0, 0, 0], [0, 0, 0.9 * math.pi])
    with pytest.raises(NonCanonical):
        apply_twist(p, Twist([0, 0, 0], [0, 0, 0.2 * math.pi]))


def test_apply_twist_large_rotation_rejected():
    with pytest.raises(ValueError):
        apply_twist(Pose.identity(), Twist([0, 0, 0], [1.0, 0, 0]))


def test_pose_delta_branch_error():
    a = Pose.identity()
    b = Pose([0, 0, 0], [0, 0, 0.9])
    with pytest.raises(BranchError):
        pose_delta(a, b)


def test_twist_additive_group():
    t = Twist([1.0, -2.0, 0.5], [0.1, 0.0, -0.3])
    zero = (t + (-t)).as_array()
    assert np.all(zero == 0.0)
    assert np.allclose((2.0 * t).as_array(), 2.0 * t.as_array())


def test_transport_wrench_cases():
    w = Wrench([215.0, 0.0, 0.0], [0.0, 0.0, 0.0])
    same = transport_wrench(w, [0.3, 0.2, 0.1], [0.3, 0.2, 0.1])
    assert np.allclose(same.as_array(), w.as_array())

    # F_r = 215 N at a 100 mm tool below the platform.
    at_platform = transport_wrench(w, [0.0, 0.0, -0.1], [0.0, 0.0, 0.0])
    assert np.allclose(at_platform.force, [215.0, 0.0, 0.0])
    assert np.allclose(at_platform.moment, [0.0, -21.5, 0.0])

    back = transport_wrench(at_platform, [0.0, 0.0, 0.0], [0.0, 0.0, -0.1])
    assert np.all(back.as_array() == w.as_array())


def test_transport_wrench_additive_in_offsets():
    rng = np.random.default_rng(9)
    for _ in range(50):
        w = Wrench(rng.normal(size=3), rng.normal(size=3))
        a, b, c = rng.normal(size=(3, 3))
        two_hop = transport_wrench(transport_wrench(w, a, b), b, c)
        one_hop = transport_wrench(w, a, c)
        assert np.allclose(two_hop.as_array(), one_hop.as_array(), atol=1e-12)
        assert np.allclose(two_hop.force, w.force)


def test_transport_wrench_linear_in_wrench():
    rng = np.random.default_rng(10)
    w1 = Wrench(rng.normal(size=3), rng.normal(size=3))
    w2 = Wrench(rng.normal(size=3), rng.normal(size=3))
    a, b = rng.normal(size=(2, 3))
    lhs = transport_wrench(w1 + w2, a, b).as_array()
    rhs = (transport_wrench(w1, a, b) + transport_wrench(w2, a, b)).as_array()
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_twist_norm_scales_rotation():
    t = Twist([0.0, 0.0, 0.0], [1.0, 0.0, 0.0])
    assert twist_norm(t, char_length=0.1) == pytest.approx(0.1)
    assert twist_norm(Twist([3e-4, 4e-4, 0.0], [0.0, 0.0, 0.0])) == pytest.approx(5e-4)
