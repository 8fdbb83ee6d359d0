import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import planar_arm
from oracles import GridOracle, bang_bang_time, toy_world
from timeik.collision import CollisionWorld, scale_to_limits
from timeik.errors import ContractViolation, PlanningError
from timeik.kinematics import DualArmSystem, Pose
from timeik.timing import (joint_move_time, path_duration, plan_collision_free, synchronized_durations,
                           synchronized_move_time, trapezoid_profile)


def test_closed_form_cases():
    assert joint_move_time(1.0, 1.0, 1.0) == 2.0
    assert joint_move_time(0.0, 1.0, 1.0) == 0.0
    assert joint_move_time(4.0, 1.0, 1.0) == 5.0
    assert joint_move_time(-4.0, 1.0, 1.0) == 5.0


def test_invalid_limits():
    with pytest.raises(ContractViolation):
        joint_move_time(1.0, 0.0, 1.0)
    with pytest.raises(ContractViolation):
        joint_move_time(1.0, 1.0, -1.0)


def test_matches_bang_bang_integration(rng):
    for _ in range(200):
        d, v, a = rng.uniform(0, 4), rng.uniform(0.3, 3), rng.uniform(0.5, 6)
        assert abs(joint_move_time(d, v, a) - bang_bang_time(d, v, a)) <= 1e-3


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 10), st.floats(0, 10), st.floats(0.1, 5), st.floats(0.1, 5))
def test_monotonicity(d1, d2, v, a):
    lo, hi = sorted((d1, d2))
    assert joint_move_time(lo, v, a) <= joint_move_time(hi, v, a) + 1e-12
    assert joint_move_time(hi, v * 1.5, a) <= joint_move_time(hi, v, a) + 1e-12
    assert joint_move_time(hi, v, a * 1.5) <= joint_move_time(hi, v, a) + 1e-12


@settings(max_examples=200, deadline=None)
@given(st.floats(-6, 6), st.floats(0.1, 5), st.floats(0.1, 5), st.floats(0, 3))
def test_profile_invariants(d, v, a, extra):
    T = joint_move_time(d, v, a) + extra
    prof = trapezoid_profile(d, v, a, T)
    assert abs(prof.position(T)[0] - d) < 1e-9
    assert abs(prof.v_peak[0]) <= v + 1e-12
    if prof.t_acc[0] > 0:
        assert abs(prof.v_peak[0]) / prof.t_acc[0] <= a * (1 + 1e-9)
    assert abs(prof.duration - T) < 1e-9 or d == 0


def test_profile_subnormal_distance_does_not_move():
    prof = trapezoid_profile(5e-324, 1.0, 0.75, 1.0)
    assert prof.duration == 1.0
    assert prof.t_acc[0] == 0.0 and prof.v_peak[0] == 0.0


def test_profile_rejects_short_duration():
    with pytest.raises(ContractViolation):
        trapezoid_profile(4.0, 1.0, 1.0, 4.0)


def two_joint_world():
    arm = planar_arm([0.5, 0.5], vel=1.0, acc=1.0, limit=5.0)
    sys = DualArmSystem(arm, planar_arm([], 1.0, 1.0), Pose(), Pose([10, 0, 0]))
    return CollisionWorld(sys)


def test_synchronized_max_rule():
    w = two_joint_world()
    est = synchronized_move_time(w, [0.0, 0.0], [1.0, 4.0])
    assert est.duration == 5.0
    assert est.collision_free
    np.testing.assert_array_equal(est.path, [[0, 0], [1, 4]])


def test_synchronized_zero_move(desk):
    q = np.zeros(desk.sys.n_total)
    est = synchronized_move_time(desk, q, q)
    assert est.duration == 0.0


def test_synchronized_out_of_limits(desk):
    q = np.zeros(desk.sys.n_total)
    far = q.copy()
    far[0] = 10.0
    with pytest.raises(ContractViolation):
        synchronized_move_time(desk, q, far)


def test_synchronized_matches_integration_and_per_joint(desk, rng):
    sys = desk.sys
    for _ in range(20):
        a, b = scale_to_limits(sys, rng.random((2, sys.n_total)))
        t = synchronized_move_time(desk, a, b).duration
        per = [bang_bang_time(d, v, acc) for d, v, acc in zip(b - a, sys.vel_max, sys.acc_max)]
        assert abs(t - max(per)) <= 1e-3
        assert all(t >= joint_move_time(d, v, acc) for d, v, acc in zip(b - a, sys.vel_max, sys.acc_max))
        assert t == synchronized_move_time(desk, b, a).duration


def test_synchronized_profiles_share_the_duration(desk, rng):
    sys = desk.sys
    a, b = scale_to_limits(sys, rng.random((2, sys.n_total)))
    T = float(synchronized_durations(sys, a, b))
    prof = trapezoid_profile(b - a, sys.vel_max, sys.acc_max, T)
    np.testing.assert_allclose(prof.position(T), b - a, atol=1e-9)


# -- planner -------------------------------------------------------------------------

def free_pairs(world, rng, n, colliding):
    sys = world.sys
    out = []
    while len(out) < n:
        Q = scale_to_limits(sys, rng.random((200, sys.n_total)))
        Q = Q[~world.collisions(Q)]
        A, B = Q[: len(Q) // 2], Q[len(Q) // 2: 2 * (len(Q) // 2)]
        hit = world.segment_collisions(A, B)
        keep = hit if colliding else ~hit
        out.extend(zip(A[keep], B[keep]))
    return out[:n]


def test_free_line_bypass(desk, rng):
    for a, b in free_pairs(desk, rng, 5, colliding=False):
        p = plan_collision_free(desk, a, b, seed=3)
        s = synchronized_move_time(desk, a, b)
        assert p.duration == s.duration and p.collision_free
        np.testing.assert_array_equal(p.path, s.path)


def test_detour_is_slower_and_path_is_valid(desk, rng):
    sys = desk.sys
    for k, (a, b) in enumerate(free_pairs(desk, rng, 10, colliding=True)):
        est = plan_collision_free(desk, a, b, seed=k)
        assert est.duration > float(synchronized_durations(sys, a, b))
        assert est.collision_free
        P = est.path
        np.testing.assert_array_equal(P[0], a)
        np.testing.assert_array_equal(P[-1], b)
        assert sys.within_limits(P).all()
        assert not desk.segment_collisions(P[:-1], P[1:]).any()
        assert abs(est.duration - path_duration(sys, P)) < 1e-12


def test_planner_is_deterministic(desk, rng):
    a, b = free_pairs(desk, rng, 1, colliding=True)[0]
    x, y = plan_collision_free(desk, a, b, seed=11), plan_collision_free(desk, a, b, seed=11)
    assert x.duration == y.duration
    assert x.path.tobytes() == y.path.tobytes()


def test_planner_endpoint_collision(desk, rng):
    sys = desk.sys
    Q = scale_to_limits(sys, rng.random((200, sys.n_total)))
    bad, good = Q[desk.collisions(Q)][0], Q[~desk.collisions(Q)][0]
    with pytest.raises(ContractViolation):
        plan_collision_free(desk, good, bad)


def test_planner_budget_exhausted(desk, rng):
    a, b = free_pairs(desk, rng, 1, colliding=True)[0]
    with pytest.raises(PlanningError):
        plan_collision_free(desk, a, b, budget=1)


def test_reversal_symmetry_statistical(desk, rng):
    ratios = []
    for k, (a, b) in enumerate(free_pairs(desk, rng, 100, colliding=True)):
        fwd = plan_collision_free(desk, a, b, seed=k).duration
        bwd = plan_collision_free(desk, b, a, seed=k).duration
        ratios.append(fwd / bwd)
    ratios = np.array(ratios)
    assert 0.8 <= np.mean(ratios) <= 1.2
    assert np.median(np.abs(ratios - 1)) <= 0.2


def test_toy_grid_oracle_few_instances():
    world = toy_world()
    oracle = GridOracle(world)
    rng = np.random.default_rng(5)
    checked = 0
    while checked < 4:
        s, g = world.sys.check(oracle.Q[rng.choice(oracle.free_idx, 2)], batch=True)
        if not world.segment_collisions(s[None], g[None])[0]:
            continue
        best = oracle.shortest_time(s, g)
        if not np.isfinite(best):
            continue
        t = plan_collision_free(world, s, g, seed=checked).duration
        assert t <= 1.2 * best and t >= 0.8 * best
        assert t >= float(synchronized_durations(world.sys, s, g))
        checked += 1
