import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import planar_arm
from oracles import fk_matrix_chain, matrix_log_angle, quat_matrix, random_chain
from timeik.errors import ContractViolation
from timeik.kinematics import (ChainModel, DualArmSystem, Joint, Pose, forward_kinematics,
                               geometric_jacobian, quat_from_axis_angle, quaternion_displacement,
                               relative_jacobian, relative_pose, rotation_angle, tcp_poses)


def random_quat(rng):
    q = rng.normal(size=4)
    return q / np.linalg.norm(q)


def fd_jacobian(chain, q, base=None, h=1e-6):
    """Central differences: position rows directly, angular rows from the rotation log."""
    n = len(q)
    J = np.zeros((6, n))
    for i in range(n):
        dq = np.zeros(n)
        dq[i] = h
        Tp = fk_matrix_chain(chain, q + dq, base)
        Tm = fk_matrix_chain(chain, q - dq, base)
        J[:3, i] = (Tp[:3, 3] - Tm[:3, 3]) / (2 * h)
        W = (Tp[:3, :3] - Tm[:3, :3]) / (2 * h) @ fk_matrix_chain(chain, q, base)[:3, :3].T
        J[3:, i] = [W[2, 1], W[0, 2], W[1, 0]]
    return J


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12)


# -- forward kinematics ------------------------------------------------------

def test_fk_straight_planar_chain():
    arm = planar_arm([1.0, 0.5])
    p = forward_kinematics(arm, [0.0, 0.0])
    np.testing.assert_allclose(p.position, [1.5, 0, 0], atol=1e-12)
    np.testing.assert_allclose(p.orientation, [1, 0, 0, 0], atol=1e-12)


def test_fk_rotated_planar_chain():
    arm = planar_arm([1.0, 0.5])
    np.testing.assert_allclose(forward_kinematics(arm, [np.pi / 2, 0]).position, [0, 1.5, 0], atol=1e-12)


def test_fk_matches_matrix_chain_oracle(rng):
    for _ in range(20):
        chain = random_chain(rng, 6)
        q = rng.uniform(-3, 3, 6)
        base = Pose(rng.normal(size=3), random_quat(rng))
        T = fk_matrix_chain(chain, q, base)
        pose = forward_kinematics(chain, q, base)
        np.testing.assert_allclose(pose.position, T[:3, 3], atol=1e-9)
        np.testing.assert_allclose(pose.rotation, T[:3, :3], atol=1e-9)
        assert abs(np.linalg.norm(pose.orientation) - 1) < 1e-9


def test_fk_dimension_mismatch():
    with pytest.raises(ContractViolation):
        forward_kinematics(planar_arm([1.0, 0.5]), [0.0])
    with pytest.raises(ContractViolation):
        forward_kinematics(planar_arm([1.0, 0.5]), [0.0, np.nan])


def test_fk_is_deterministic(rng):
    chain = random_chain(rng, 7)
    q = rng.uniform(-3, 3, 7)
    a, b = forward_kinematics(chain, q), forward_kinematics(chain, q)
    assert a.position.tobytes() == b.position.tobytes()
    assert a.orientation.tobytes() == b.orientation.tobytes()


# -- Jacobian ------------------------------------------------------------------

def test_jacobian_single_link():
    J = geometric_jacobian(planar_arm([0.7]), [0.0])
    np.testing.assert_allclose(J[:, 0], [0, 0.7, 0, 0, 0, 1], atol=1e-12)


def test_jacobian_zero_length_chain():
    chain = ChainModel([Joint([0, 0, 1], Pose(), -1, 1, 1, 1), Joint([1, 0, 0], Pose(), -1, 1, 1, 1)])
    J = geometric_jacobian(chain, [0.3, -0.4])
    np.testing.assert_allclose(J[:3], 0, atol=1e-15)


def test_jacobian_matches_finite_differences(rng):
    for _ in range(50):
        n = int(rng.integers(1, 8))
        chain = random_chain(rng, n)
        q = rng.uniform(-3, 3, n)
        J = geometric_jacobian(chain, q)
        assert J.shape == (6, n)
        assert rel_err(J, fd_jacobian(chain, q)) <= 1e-5


# -- relative pose and Jacobian ----------------------------------------------------

def test_relative_pose_coincident_tcps():
    arm = planar_arm([0.5, 0.5])
    sys = DualArmSystem(arm, arm, Pose(), Pose())
    rel = relative_pose(sys, [0.2, 0.3, 0.2, 0.3])
    np.testing.assert_allclose(rel.position, 0, atol=1e-12)
    assert rotation_angle(rel.orientation) < 1e-9


def test_relative_pose_constructed_offset():
    arm = planar_arm([0.5, 0.5])
    sys = DualArmSystem(arm, arm, Pose(), Pose([0, 0, 0.1]))
    # rotate A so its TCP frame differs from the world frame: offset stays along TCP-A z
    rel = relative_pose(sys, [0.4, -0.9, 0.4, -0.9])
    np.testing.assert_allclose(rel.position, [0, 0, 0.1], atol=1e-12)


def test_relative_pose_composition_oracle(spatial_sys, rng):
    sys = spatial_sys
    for _ in range(20):
        q = rng.uniform(-3, 3, sys.n_total)
        qa, qb = sys.split(q)
        TA = fk_matrix_chain(sys.robot_a, qa, sys.base_a)
        TB = fk_matrix_chain(sys.robot_b, qb, sys.base_b)
        T = np.linalg.inv(TA) @ TB
        rel = relative_pose(sys, q)
        np.testing.assert_allclose(rel.position, T[:3, 3], atol=1e-9)
        np.testing.assert_allclose(rel.rotation, T[:3, :3], atol=1e-9)


def fd_relative_jacobian(sys, q, h=1e-6):
    n = len(q)
    J = np.zeros((6, n))
    R0 = relative_pose(sys, q).rotation
    for i in range(n):
        dq = np.zeros(n)
        dq[i] = h
        Pp, Pm = relative_pose(sys, q + dq), relative_pose(sys, q - dq)
        J[:3, i] = (Pp.position - Pm.position) / (2 * h)
        W = (Pp.rotation - Pm.rotation) / (2 * h) @ R0.T
        J[3:, i] = [W[2, 1], W[0, 2], W[1, 0]]
    return J


def test_relative_jacobian_matches_finite_differences(spatial_sys, rng):
    for _ in range(20):
        q = rng.uniform(-3, 3, spatial_sys.n_total)
        J = relative_jacobian(spatial_sys, q)
        assert J.shape == (6, spatial_sys.n_total)
        assert rel_err(J, fd_relative_jacobian(spatial_sys, q)) <= 1e-5


def test_relative_jacobian_block_structure(spatial_sys, rng):
    sys = spatial_sys
    q = rng.uniform(-3, 3, sys.n_total)
    qa, _ = sys.split(q)
    J = relative_jacobian(sys, q)
    JA = geometric_jacobian(sys.robot_a, qa, sys.base_a)
    RA = tcp_poses(sys, q)[0].rotation
    np.testing.assert_allclose(J[3:, :sys.n_a], -RA.T @ JA[3:], atol=1e-9)
    d = tcp_poses(sys, q)[1].position - tcp_poses(sys, q)[0].position
    np.testing.assert_allclose(J[:3, :sys.n_a], RA.T @ (-JA[:3] + np.cross(d, JA[3:], axis=0)), atol=1e-9)


def test_mirrored_arms_moving_together_have_no_relative_velocity():
    arm = planar_arm([0.5, 0.4])
    sys = DualArmSystem(arm, arm, Pose(), Pose([0, 0, 0.3]))
    q = np.array([0.3, -0.5, 0.3, -0.5])
    qdot = np.array([0.7, 0.2, 0.7, 0.2])
    twist = relative_jacobian(sys, q) @ qdot
    np.testing.assert_allclose(twist, 0, atol=1e-12)


def test_relative_pose_invariant_under_common_base_transform(spatial_sys, rng):
    sys = spatial_sys
    T = Pose(rng.normal(size=3), random_quat(rng))
    moved = DualArmSystem(sys.robot_a, sys.robot_b, T @ sys.base_a, T @ sys.base_b)
    for _ in range(10):
        q = rng.uniform(-3, 3, sys.n_total)
        a, b = relative_pose(sys, q), relative_pose(moved, q)
        assert abs(np.linalg.norm(a.position) - np.linalg.norm(b.position)) < 1e-9
        assert rotation_angle(quaternion_displacement(a.orientation, b.orientation)) < 1e-7


def test_split_at_n_a(spatial_sys):
    q = np.arange(spatial_sys.n_total, dtype=float)
    qa, qb = spatial_sys.split(q)
    assert len(qa) == 6 and len(qb) == 7 and qb[0] == 6


# -- quaternions -------------------------------------------------------------------

def test_displacement_of_equal_is_identity(rng):
    q = random_quat(rng)
    np.testing.assert_allclose(quaternion_displacement(q, q), [1, 0, 0, 0], atol=1e-12)


def test_displacement_quarter_turn():
    d = quaternion_displacement([1, 0, 0, 0], quat_from_axis_angle([0, 0, 1], np.pi / 2))
    assert abs(rotation_angle(d) - np.pi / 2) < 1e-12
    np.testing.assert_allclose(d[1:] / np.linalg.norm(d[1:]), [0, 0, 1], atol=1e-12)


def test_displacement_matches_matrix_log(rng):
    for _ in range(50):
        q1, q2 = random_quat(rng), random_quat(rng)
        angle = rotation_angle(quaternion_displacement(q1, q2))
        assert abs(angle - matrix_log_angle(quat_matrix(q1).T @ quat_matrix(q2))) < 1e-9


def test_displacement_rejects_non_unit():
    with pytest.raises(ContractViolation):
        quaternion_displacement([1, 0, 0, 0], [1.01, 0, 0, 0])


def test_displacement_canonical_hemisphere(rng):
    for _ in range(20):
        assert quaternion_displacement(random_quat(rng), random_quat(rng))[0] >= 0


def test_rotation_angle_cases(rng):
    assert rotation_angle([1, 0, 0, 0]) == 0
    assert abs(rotation_angle([0, 1, 0, 0]) - np.pi) < 1e-15
    for _ in range(50):
        q = random_quat(rng)
        if abs(q[0]) > 0.99 or abs(q[0]) < 0.01:
            continue
        assert abs(rotation_angle(q) - 2 * np.arccos(abs(q[0]))) < 1e-9


unit_quats = st.lists(st.floats(-1, 1), min_size=4, max_size=4).filter(
    lambda v: np.linalg.norm(v) > 0.1).map(lambda v: np.array(v) / np.linalg.norm(v))


@settings(max_examples=100, deadline=None)
@given(unit_quats, unit_quats)
def test_double_cover_invariance(q1, q2):
    a = rotation_angle(quaternion_displacement(q1, q2))
    b = rotation_angle(quaternion_displacement(-q1, q2))
    assert abs(a - b) < 1e-12


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3), unit_quats)
def test_pose_inverse_composition_is_identity(p, q):
    P = Pose(p, q)
    I = P @ P.inverse()
    assert np.linalg.norm(I.position) < 1e-9
    assert rotation_angle(I.orientation) < 1e-7
    assert abs(np.linalg.norm(I.orientation) - 1) < 1e-9


def test_chain_validation():
    with pytest.raises(ContractViolation):
        Joint([0, 0, 1], Pose(), 1.0, 1.0, 1, 1)
    with pytest.raises(ContractViolation):
        Joint([0, 0, 1], Pose(), -1.0, 1.0, 0, 1)
    with pytest.raises(ContractViolation):
        ChainModel([Joint([0, 0, 1], Pose(), -1, 1, 1, 1)], link_spheres=[[[0, 0, 0, -0.1]]])
