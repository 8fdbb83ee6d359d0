"""Sphere-based collision checks and Halton configuration sampling."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import _kernels
from .errors import ContractViolation, NoFreeSampleError
from .kinematics import DualArmSystem, chain_frames

DEFAULT_CHECK_STEP = 0.05


@dataclass(frozen=True, eq=False)
class CollisionWorld:
    """Collision model of a dual-arm system plus static world-frame spheres."""

    sys: DualArmSystem
    static_obstacles: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))

    def __post_init__(self):
        obs = np.array(self.static_obstacles, dtype=float).reshape(-1, 4)
        if np.any(obs[:, 3] <= 0):
            raise ContractViolation("obstacle radii must be > 0")
        object.__setattr__(self, "static_obstacles", obs)

    @classmethod
    def from_scene(cls, scene) -> "CollisionWorld":
        return cls(scene.system, scene.obstacles)

    @cached_property
    def _spheres(self):
        # per arm: local centers, radii, link index
        out = []
        for chain in (self.sys.robot_a, self.sys.robot_b):
            centers, radii, links = [], [], []
            for link, s in enumerate(chain.link_spheres):
                centers.append(s[:, :3])
                radii.append(s[:, 3])
                links.append(np.full(len(s), link))
            out.append((np.concatenate(centers), np.concatenate(radii),
                        np.concatenate(links).astype(int)))
        return out

    @cached_property
    def adjacency_exclusions(self) -> frozenset:
        """``(arm, link_i, link_j)`` triples, both orders, never tested."""
        ex = set()
        for arm, chain in enumerate((self.sys.robot_a, self.sys.robot_b)):
            pairs = {(i, i + 1) for i in range(chain.dof)} | set(chain.collision_exclusions)
            for i, j in pairs:
                ex.add((arm, i, j))
                ex.add((arm, j, i))
        return frozenset(ex)

    @cached_property
    def _pairs(self):
        (_, ra, la), (_, rb, lb) = self._spheres
        na = len(ra)
        I, J = [], []
        for arm, (r, links, off) in enumerate(((ra, la, 0), (rb, lb, na))):
            for i in range(len(r)):
                for j in range(i + 1, len(r)):
                    li, lj = links[i], links[j]
                    if li == lj or (arm, li, lj) in self.adjacency_exclusions:
                        continue
                    I.append(off + i)
                    J.append(off + j)
        for i in range(na):
            for j in range(len(rb)):
                I.append(i)
                J.append(na + j)
        radii = np.concatenate([ra, rb])
        I = np.array(I, dtype=int)
        J = np.array(J, dtype=int)
        return I, J, (radii[I] + radii[J]) ** 2, radii

    def sphere_centers(self, Q) -> np.ndarray:
        """World-frame centers ``(B, S, 3)`` of all robot spheres, arm A first."""
        Q = np.asarray(Q, dtype=float)
        QA, QB = self.sys.split(Q)
        out = []
        for (centers, _, links), chain, base, q in zip(
                self._spheres, (self.sys.robot_a, self.sys.robot_b),
                (self.sys.base_a, self.sys.base_b), (QA, QB)):
            f = chain_frames(chain, q, base)
            out.append(f.link_p[:, links] + np.einsum("bsij,sj->bsi", f.link_R[:, links], centers))
        return np.concatenate(out, axis=1)

    @cached_property
    def _packed(self):
        sys = self.sys
        chains = (sys.robot_a, sys.robot_b)
        joints = [j for c in chains for j in c.joints]
        I, J, rsum2, radii = self._pairs
        frame_offset = (0, sys.n_a + 1)
        return (
            np.array([0, sys.n_a], dtype=np.int64),
            np.array([sys.n_a, sys.n_b], dtype=np.int64),
            np.stack([sys.base_a.rotation, sys.base_b.rotation]),
            np.stack([sys.base_a.position, sys.base_b.position]),
            np.array([j.origin.rotation for j in joints]).reshape(-1, 3, 3),
            np.array([j.origin.position for j in joints]).reshape(-1, 3),
            np.array([j.axis for j in joints]).reshape(-1, 3),
            np.concatenate([links + off for (_, _, links), off in zip(self._spheres, frame_offset)]).astype(np.int64),
            np.concatenate([c for c, _, _ in self._spheres]).reshape(-1, 3),
            radii,
            I.astype(np.int64), J.astype(np.int64), rsum2,
            self.static_obstacles,
        )

    def collisions(self, Q) -> np.ndarray:
        """Boolean verdict per row of ``Q``."""
        Q = np.ascontiguousarray(self.sys.check(Q, batch=True))
        return _kernels.config_hits(Q, *self._packed)

    def segment_collisions(self, Q_from, Q_to, step: float = DEFAULT_CHECK_STEP) -> np.ndarray:
        """Per row: does the straight joint-space line collide (endpoints included)?"""
        if not step > 0:
            raise ContractViolation("step must be > 0")
        Q_from = np.ascontiguousarray(self.sys.check(Q_from, batch=True))
        Q_to = np.ascontiguousarray(self.sys.check(Q_to, batch=True))
        return _kernels.segment_hits(Q_from, Q_to, float(step), *self._packed)


def config_in_collision(world: CollisionWorld, q) -> bool:
    q = world.sys.check(q)
    return bool(world.collisions(q[None])[0])


def interpolate(q_from, q_to, step: float) -> np.ndarray:
    """Joint-space samples from ``q_from`` to ``q_to`` (both included) spaced <= step in max-norm."""
    q_from = np.asarray(q_from, dtype=float)
    q_to = np.asarray(q_to, dtype=float)
    span = np.max(np.abs(q_to - q_from)) if q_from.size else 0.0
    n = max(int(np.ceil(span / step)), 1)
    t = np.linspace(0.0, 1.0, n + 1)[:, None]
    return q_from + t * (q_to - q_from)


def motion_in_collision(world: CollisionWorld, q_from, q_to, step: float = DEFAULT_CHECK_STEP) -> bool:
    """Straight joint-space motion check at max-norm resolution ``step``."""
    q_from = world.sys.check(q_from)
    q_to = world.sys.check(q_to)
    return bool(world.segment_collisions(q_from[None], q_to[None], step)[0])


def segments_in_collision(world: CollisionWorld, Q_from, Q_to, step: float = DEFAULT_CHECK_STEP) -> np.ndarray:
    return world.segment_collisions(Q_from, Q_to, step)


# ---------------------------------------------------------------------------
# Halton sampling
# ---------------------------------------------------------------------------

def first_primes(n: int) -> list[int]:
    primes: list[int] = []
    k = 2
    while len(primes) < n:
        if all(k % p for p in primes if p * p <= k):
            primes.append(k)
        k += 1
    return primes


def radical_inverse(indices, base: int) -> np.ndarray:
    """Van der Corput radical inverse of integer ``indices`` in ``base``.

    Numerator and denominator are accumulated as integers and divided once,
    so values are exact to float rounding while both stay below 2**53.
    """
    i = np.array(indices, dtype=np.int64)
    num = np.zeros_like(i)
    den = np.ones_like(i)
    while np.any(i > 0):
        num = num * base + i % base
        den = den * base
        i = i // base
    return num / den


@dataclass
class HaltonSampler:
    dimension: int
    index: int = 1

    def __post_init__(self):
        if self.dimension < 0:
            raise ContractViolation("dimension must be >= 0")
        self.bases = first_primes(self.dimension)

    def next(self) -> np.ndarray:
        return self.take(1)[0]

    def take(self, count: int) -> np.ndarray:
        idx = np.arange(self.index, self.index + count, dtype=np.int64)
        self.index += count
        if self.dimension == 0:
            return np.zeros((count, 0))
        return np.stack([radical_inverse(idx, b) for b in self.bases], axis=1)


def halton_next(sampler: HaltonSampler) -> np.ndarray:
    return sampler.next()


def scale_to_limits(sys: DualArmSystem, u) -> np.ndarray:
    return sys.q_min + np.asarray(u) * (sys.q_max - sys.q_min)


def sample_collision_free(world: CollisionWorld, sampler: HaltonSampler, max_tries: int = 1000) -> np.ndarray:
    return sample_collision_free_batch(world, sampler, 1, max_tries)[0]


def sample_collision_free_batch(world: CollisionWorld, sampler: HaltonSampler, count: int,
                                max_tries: int) -> np.ndarray:
    """First ``count`` free configurations from the sampler's stream.

    On success the sampler is left just past the last accepted point.
    """
    if max_tries < 1:
        raise ContractViolation("max_tries must be >= 1")
    if sampler.dimension != world.sys.n_total:
        raise ContractViolation("sampler dimension does not match the system")
    found: list[np.ndarray] = []
    have = tries = 0
    while have < count:
        if tries >= max_tries:
            raise NoFreeSampleError(f"found {have}/{count} free samples in {max_tries} tries")
        block = min(max(2 * (count - have), 16), max_tries - tries)
        start = sampler.index
        Q = scale_to_limits(world.sys, sampler.take(block))
        free = ~world.collisions(Q)
        tries += block
        idx = np.flatnonzero(free)[: count - have]
        if len(idx) and have + len(idx) == count:
            # rewind so the stream continues right after the last accepted sample
            sampler.index = start + int(idx[-1]) + 1
        found.append(Q[idx])
        have += len(idx)
    return np.concatenate(found)[:count]
