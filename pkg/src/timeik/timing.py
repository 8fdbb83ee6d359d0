"""Execution-time oracles for rest-to-rest joint motions.

Two references are provided: a collision-blind synchronized trapezoid timing
of the straight joint-space line, and a collision-aware variant that routes
around obstacles with RRT-Connect and times the shortcut path segment by
segment, stopping at every waypoint.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .collision import DEFAULT_CHECK_STEP, CollisionWorld
from .errors import ContractViolation, PlanningError
from .kinematics import DualArmSystem

log = logging.getLogger(__name__)

EXTEND_STEP = 0.2
SHORTCUT_ITERATIONS = 200
PLAN_BUDGET = 5000


def joint_move_time(distance, vel_max, acc_max):
    """Minimum rest-to-rest time to travel ``distance`` under velocity/acceleration caps.

    Triangular profile ``2*sqrt(|d|/a)`` while ``|d| <= v**2/a``, otherwise
    trapezoidal ``|d|/v + v/a``. Broadcasts over arrays.
    """
    v = np.asarray(vel_max, dtype=float)
    a = np.asarray(acc_max, dtype=float)
    if np.any(v <= 0) or np.any(a <= 0):
        raise ContractViolation("vel_max and acc_max must be > 0")
    d = np.abs(np.asarray(distance, dtype=float))
    t = np.where(d <= v * v / a, 2.0 * np.sqrt(d / a), d / v + v / a)
    return float(t) if t.ndim == 0 else t


@dataclass(frozen=True)
class TrapezoidProfile:
    """Per-joint rest-to-rest profile: accelerate for ``t_acc``, cruise at
    ``v_peak`` (signed) for ``t_cruise``, decelerate for ``t_acc``."""

    t_acc: np.ndarray
    t_cruise: np.ndarray
    v_peak: np.ndarray

    @property
    def duration(self) -> float:
        return float(np.max(2.0 * self.t_acc + self.t_cruise, initial=0.0))

    def position(self, t: float) -> np.ndarray:
        """Displacement of each joint at time ``t`` from the start."""
        ta, tc, v = self.t_acc, self.t_cruise, self.v_peak
        acc = np.divide(v, ta, out=np.zeros_like(v), where=ta > 0)
        t1 = np.minimum(t, ta)
        x = 0.5 * acc * t1 ** 2
        t2 = np.clip(t - ta, 0.0, tc)
        x = x + v * t2
        t3 = np.clip(t - ta - tc, 0.0, ta)
        return x + v * t3 - 0.5 * acc * t3 ** 2


def trapezoid_profile(distance, vel_max, acc_max, duration: float | None = None) -> TrapezoidProfile:
    """Profiles reaching ``distance``; stretched to finish at ``duration`` when given."""
    d = np.atleast_1d(np.asarray(distance, dtype=float))
    v = np.broadcast_to(np.asarray(vel_max, dtype=float), d.shape)
    a = np.broadcast_to(np.asarray(acc_max, dtype=float), d.shape)
    dist = np.abs(d)
    own = np.atleast_1d(joint_move_time(dist, v, a))
    T = own if duration is None else np.full(d.shape, float(duration))
    if np.any(T < own - 1e-12):
        raise ContractViolation("duration is shorter than the minimum move time")
    # peak speed v solves |d|/v + v/a = T (or the triangular limit); the
    # conjugate form avoids cancellation for short moves
    disc = np.maximum(a * a * T * T - 4.0 * a * dist, 0.0)
    # distances near the subnormal range would underflow the peak speed; they do not move
    moving = dist > 1e-200
    vp = np.where(moving, 2.0 * a * dist / np.maximum(a * T + np.sqrt(disc), 1e-300), 0.0)
    vp = np.minimum(vp, v)
    t_acc = np.divide(vp, a)
    t_cruise = np.where(moving, np.divide(dist, np.where(moving, vp, 1.0)) - t_acc, T)
    t_cruise = np.maximum(t_cruise, 0.0)
    return TrapezoidProfile(t_acc, t_cruise, np.sign(d) * vp)


def synchronized_durations(sys: DualArmSystem, Q_from, Q_to) -> np.ndarray:
    """Vectorized collision-blind durations: slowest joint sets the time."""
    D = np.asarray(Q_to, dtype=float) - np.asarray(Q_from, dtype=float)
    if D.shape[-1] == 0:
        return np.zeros(D.shape[:-1])
    return np.max(joint_move_time(D, sys.vel_max, sys.acc_max), axis=-1)


@dataclass(frozen=True, eq=False)
class TimeEstimate:
    duration: float
    collision_free: bool
    path: np.ndarray | None = None  # (m, n_T) waypoints, rest at each


def _check_endpoints(sys, q_from, q_to):
    q_from = sys.check(q_from)
    q_to = sys.check(q_to)
    if not (sys.within_limits(q_from, 1e-9) and sys.within_limits(q_to, 1e-9)):
        raise ContractViolation("configuration outside joint limits")
    return q_from, q_to


def synchronized_move_time(world: CollisionWorld, q_from, q_to,
                           step: float = DEFAULT_CHECK_STEP) -> TimeEstimate:
    sys = world.sys
    q_from, q_to = _check_endpoints(sys, q_from, q_to)
    duration = float(synchronized_durations(sys, q_from, q_to))
    free = not world.segment_collisions(q_from[None], q_to[None], step)[0]
    return TimeEstimate(duration, free, np.stack([q_from, q_to]))


def path_duration(sys: DualArmSystem, path) -> float:
    path = np.asarray(path, dtype=float)
    if len(path) < 2:
        return 0.0
    return float(np.sum(synchronized_durations(sys, path[:-1], path[1:])))


class _Tree:
    def __init__(self, root, capacity):
        self.nodes = np.empty((capacity + 1, len(root)))
        self.parent = np.full(capacity + 1, -1, dtype=int)
        self.nodes[0] = root
        self.size = 1

    def nearest(self, q):
        d = self.nodes[: self.size] - q
        return int(np.argmin(np.einsum("ij,ij->i", d, d)))

    def add(self, q, parent):
        self.nodes[self.size] = q
        self.parent[self.size] = parent
        self.size += 1
        return self.size - 1

    def branch(self, idx):
        out = []
        while idx >= 0:
            out.append(self.nodes[idx])
            idx = self.parent[idx]
        return out[::-1]


_TRAPPED, _ADVANCED, _REACHED = 0, 1, 2


class _Planner:
    def __init__(self, world, step, extend_step):
        self.packed = world._packed
        self.step = float(step)
        self.extend_step = extend_step

    def free(self, a, b) -> bool:
        # inputs are already validated; skip the public wrapper's checks
        return not _kernels.segment_hits(a[None], b[None], self.step, *self.packed)[0]

    def extend(self, tree, target):
        near = tree.nearest(target)
        q_near = tree.nodes[near]
        delta = target - q_near
        m = np.max(np.abs(delta))
        if m <= self.extend_step:
            q_new, status = target, _REACHED
        else:
            q_new, status = q_near + delta * (self.extend_step / m), _ADVANCED
        if not self.free(q_near, q_new):
            return _TRAPPED, -1
        return status, tree.add(q_new, near)


def _rrt_connect(planner, sys, q_from, q_to, budget, rng):
    start, goal = _Tree(q_from, budget), _Tree(q_to, budget)
    trees = [start, goal]
    used = 0
    while used < budget:
        a, b = trees
        q_rand = rng.uniform(sys.q_min, sys.q_max)
        status, ia = planner.extend(a, q_rand)
        used += 1
        if status != _TRAPPED:
            q_new = a.nodes[ia].copy()
            while used < budget:
                st, ib = planner.extend(b, q_new)
                used += 1
                if st == _REACHED:
                    pa, pb = a.branch(ia), b.branch(ib)
                    if a is start:
                        return np.array(pa + pb[::-1][1:]), used
                    return np.array(pb + pa[::-1][1:]), used
                if st == _TRAPPED:
                    break
        trees.reverse()
    raise PlanningError(f"no connection within {budget} extensions")


def _locate(cum, s):
    i = int(np.searchsorted(cum, s, side="right") - 1)
    return min(max(i, 0), len(cum) - 2)


def _greedy(planner, path):
    """Jump from each waypoint to the farthest directly reachable one."""
    out, i = [path[0]], 0
    while i < len(path) - 1:
        j = len(path) - 1
        while j > i + 1 and not planner.free(path[i], path[j]):
            j -= 1
        out.append(path[j])
        i = j
    return np.array(out)


def shortcut(planner, sys, path, iterations, rng):
    """Randomized shortcutting; a change is kept only if it is free and faster.

    Each iteration either splices out the stretch between two waypoints, splices
    between two points along the path, or nudges one interior waypoint. Dropping
    a visible waypoint never slows a rest-to-rest path, so greedy passes run
    before and after.
    """
    path = _greedy(planner, np.asarray(path, dtype=float))
    best = path_duration(sys, path)
    for _ in range(iterations):
        if len(path) < 3:
            break
        u = rng.random()
        if u < 1 / 3:
            k = int(rng.integers(1, len(path) - 1))
            span = min(np.max(np.abs(path[k] - path[k - 1])), np.max(np.abs(path[k + 1] - path[k])))
            p = np.clip(path[k] + rng.normal(0.0, 0.25 * span, path.shape[1]), sys.q_min, sys.q_max)
            cand = path.copy()
            cand[k] = p
            t = path_duration(sys, cand)
            if t < best - 1e-12 and planner.free(path[k - 1], p) and planner.free(p, path[k + 1]):
                path, best = cand, t
            continue
        if u < 2 / 3:
            i, j = np.sort(rng.choice(len(path), 2, replace=False))
            if j - i < 2:
                continue
            cand = np.concatenate([path[: i + 1], path[j:]])
            a, b = path[i], path[j]
        else:
            seg = np.max(np.abs(np.diff(path, axis=0)), axis=1)
            cum = np.concatenate([[0.0], np.cumsum(seg)])
            s1, s2 = np.sort(rng.uniform(0.0, cum[-1], 2))
            i, j = _locate(cum, s1), _locate(cum, s2)
            if i == j:
                continue
            a = path[i] + (path[i + 1] - path[i]) * ((s1 - cum[i]) / max(seg[i], 1e-12))
            b = path[j] + (path[j + 1] - path[j]) * ((s2 - cum[j]) / max(seg[j], 1e-12))
            cand = np.concatenate([path[: i + 1], [a, b], path[j + 1:]])
        t = path_duration(sys, cand)
        if t < best - 1e-12 and planner.free(a, b):
            path, best = cand, t
    path = _greedy(planner, path)
    return path, path_duration(sys, path)


def plan_collision_free(world: CollisionWorld, q_from, q_to, budget: int = PLAN_BUDGET,
                        seed: int = 0, *, extend_step: float = EXTEND_STEP,
                        shortcut_iterations: int = SHORTCUT_ITERATIONS,
                        step: float = DEFAULT_CHECK_STEP) -> TimeEstimate:
    """Collision-aware execution time between two free configurations.

    A free straight line is returned exactly as :func:`synchronized_move_time`
    would. Otherwise RRT-Connect finds a path which is then shortcut; the
    duration sums rest-to-rest segment times. Deterministic given ``seed``.
    """
    sys = world.sys
    q_from, q_to = _check_endpoints(sys, q_from, q_to)
    if world.collisions(np.stack([q_from, q_to])).any():
        raise ContractViolation("planning endpoints must be collision-free")
    direct = synchronized_move_time(world, q_from, q_to, step)
    if direct.collision_free:
        return direct
    rng = np.random.default_rng(seed)
    planner = _Planner(world, step, extend_step)
    raw, used = _rrt_connect(planner, sys, q_from, q_to, budget, rng)
    path, duration = shortcut(planner, sys, raw, shortcut_iterations, rng)
    log.debug("planned %d -> %d waypoints with %d extensions", len(raw), len(path), used)
    return TimeEstimate(duration, True, path)
