import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_force_collision, random_chain
from timeik.collision import (CollisionWorld, HaltonSampler, config_in_collision, halton_next,
                              interpolate, motion_in_collision, radical_inverse, sample_collision_free,
                              scale_to_limits)
from timeik.errors import ContractViolation, NoFreeSampleError
from timeik.kinematics import ChainModel, DualArmSystem, Pose


def uniform(sys, rng, n):
    return scale_to_limits(sys, rng.random((n, sys.n_total)))


def test_far_apart_arms_never_collide(desk_open, rng):
    Q = uniform(desk_open.sys, rng, 2000)
    assert not desk_open.collisions(Q).any()


def test_obstacle_on_base_sphere(desk):
    sys = desk.sys
    c = sys.base_a.position
    world = CollisionWorld(sys, [[*c, 0.01]])
    assert config_in_collision(world, np.zeros(sys.n_total))


def test_matches_brute_force_oracle(desk, rng):
    Q = uniform(desk.sys, rng, 400)
    fast = desk.collisions(Q)
    slow = np.array([brute_force_collision(desk, q) for q in Q])
    assert fast.any() and not fast.all()
    np.testing.assert_array_equal(fast, slow)


def test_matches_brute_force_on_random_spatial_scenes(rng):
    for _ in range(5):
        a, b = random_chain(rng, 4, spheres=True), random_chain(rng, 3, spheres=True)
        sys = DualArmSystem(a, b, Pose(), Pose(rng.uniform(-0.5, 0.5, 3)))
        world = CollisionWorld(sys, [[*rng.uniform(-0.5, 0.5, 3), 0.2]])
        Q = uniform(sys, rng, 100)
        slow = np.array([brute_force_collision(world, q) for q in Q])
        np.testing.assert_array_equal(world.collisions(Q), slow)


def test_numpy_sphere_centers_agree_with_kernel_verdict(desk, rng):
    Q = uniform(desk.sys, rng, 50)
    C = desk.sphere_centers(Q)
    I, J, r2, radii = desk._pairs
    d2 = np.sum((C[:, I] - C[:, J]) ** 2, axis=-1)
    hit = (d2 < r2).any(axis=1)
    for o in desk.static_obstacles:
        hit |= (np.linalg.norm(C - o[:3], axis=-1) < radii + o[3]).any(axis=1)
    np.testing.assert_array_equal(hit, desk.collisions(Q))


def test_exclusions_are_symmetric(desk):
    for arm, i, j in desk.adjacency_exclusions:
        assert (arm, j, i) in desk.adjacency_exclusions


def test_swapping_arms_preserves_verdict(desk, rng):
    sys = desk.sys
    swapped = CollisionWorld(DualArmSystem(sys.robot_b, sys.robot_a, sys.base_b, sys.base_a),
                             desk.static_obstacles)
    Q = uniform(sys, rng, 500)
    Qs = np.hstack([Q[:, sys.n_a:], Q[:, :sys.n_a]])
    np.testing.assert_array_equal(desk.collisions(Q), swapped.collisions(Qs))


def shrink(world, eps):
    def chain(c):
        return ChainModel(c.joints, c.tcp, [s - [0, 0, 0, eps] * (len(s) > 0) for s in c.link_spheres],
                          c.collision_exclusions)
    sys = world.sys
    return CollisionWorld(DualArmSystem(chain(sys.robot_a), chain(sys.robot_b), sys.base_a, sys.base_b),
                          world.static_obstacles - [0, 0, 0, eps])


def test_shrinking_radii_never_adds_collisions(desk, rng):
    small = shrink(desk, 0.005)
    Q = uniform(desk.sys, rng, 2000)
    assert not (small.collisions(Q) & ~desk.collisions(Q)).any()


def test_motion_same_point(desk_open):
    q = np.zeros(desk_open.sys.n_total)
    assert not motion_in_collision(desk_open, q, q, 0.05)


def test_motion_endpoint_in_collision(desk, rng):
    Q = uniform(desk.sys, rng, 200)
    bad = Q[desk.collisions(Q)][0]
    good = Q[~desk.collisions(Q)][0]
    assert motion_in_collision(desk, good, bad)
    assert motion_in_collision(desk, bad, good)


def test_motion_step_must_be_positive(desk):
    q = np.zeros(desk.sys.n_total)
    with pytest.raises(ContractViolation):
        motion_in_collision(desk, q, q, 0.0)


def test_motion_agrees_with_finer_resolution(desk, rng):
    free = uniform(desk.sys, rng, 4000)
    free = free[~desk.collisions(free)][:2000]
    A, B = free[:1000], free[1000:2000]
    coarse = desk.segment_collisions(A, B, 0.05)
    fine = desk.segment_collisions(A, B, 0.005)
    assert np.mean(coarse == fine) >= 0.99


def test_motion_matches_explicit_interpolation(desk, rng):
    free = uniform(desk.sys, rng, 200)
    free = free[~desk.collisions(free)]
    for a, b in zip(free[:20], free[20:40]):
        pts = interpolate(a, b, 0.05)
        assert np.max(np.abs(np.diff(pts, axis=0))) <= 0.05 + 1e-12
        assert motion_in_collision(desk, a, b) == bool(desk.collisions(pts).any())


# -- Halton -------------------------------------------------------------------------

def test_halton_base2_and_base3():
    np.testing.assert_allclose(radical_inverse([1, 2, 3], 2), [0.5, 0.25, 0.75])
    np.testing.assert_allclose(radical_inverse([1, 2, 3], 3), [1 / 3, 2 / 3, 1 / 9])


def test_halton_first_point():
    s = HaltonSampler(2)
    np.testing.assert_allclose(halton_next(s), [0.5, 1 / 3])
    assert s.index == 2


def closed_form(i, b):
    # digit expansion with exact fractions
    from fractions import Fraction
    x, f = Fraction(0), Fraction(1, b)
    while i:
        x += f * (i % b)
        i //= b
        f /= b
    return float(x)


def test_halton_matches_closed_form_first_100():
    for b in (2, 3, 5):
        got = radical_inverse(np.arange(1, 101), b)
        assert list(got) == [closed_form(i, b) for i in range(1, 101)]


def test_halton_in_unit_interval_and_deterministic():
    a = HaltonSampler(6, 1000).take(500)
    b = HaltonSampler(6, 1000).take(500)
    assert a.tobytes() == b.tobytes()
    assert (a >= 0).all() and (a < 1).all()


def test_sample_free_first_try(desk_open):
    s = HaltonSampler(desk_open.sys.n_total)
    q = sample_collision_free(desk_open, s, 1)
    np.testing.assert_allclose(q, scale_to_limits(desk_open.sys, HaltonSampler(desk_open.sys.n_total).next()))
    assert s.index == 2


def test_sample_giant_obstacle_fails(desk):
    world = CollisionWorld(desk.sys, [[0, 0, 0, 100.0]])
    with pytest.raises(NoFreeSampleError):
        sample_collision_free(world, HaltonSampler(desk.sys.n_total), 50)


def test_sample_is_deterministic_and_free(desk):
    a = [sample_collision_free(desk, s, 1000) for s in [HaltonSampler(desk.sys.n_total, 7)] for _ in range(5)]
    s = HaltonSampler(desk.sys.n_total, 7)
    b = [sample_collision_free(desk, s, 1000) for _ in range(5)]
    assert np.array(a).tobytes() == np.array(b).tobytes()
    assert not desk.collisions(np.array(a)).any()


def test_sample_sequence_skips_colliding_points(desk):
    """Sampling one at a time returns the free points of the raw stream in order."""
    raw = scale_to_limits(desk.sys, HaltonSampler(desk.sys.n_total, 1).take(200))
    expected = raw[~desk.collisions(raw)][:10]
    s = HaltonSampler(desk.sys.n_total, 1)
    got = np.array([sample_collision_free(desk, s, 1000) for _ in range(10)])
    np.testing.assert_array_equal(got, expected)


def test_sample_max_tries_validation(desk):
    with pytest.raises(ContractViolation):
        sample_collision_free(desk, HaltonSampler(desk.sys.n_total), 0)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 10 ** 9), st.sampled_from([2, 3, 5, 7, 11, 13]))
def test_radical_inverse_range(i, b):
    x = float(radical_inverse([i], b)[0])
    assert 0 < x < 1
    assert x == closed_form(i, b)
