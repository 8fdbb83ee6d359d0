"""Serial-chain kinematics and the dual-arm relative pose formulation.

Quaternions are stored scalar-first, ``(w, x, y, z)``. All batched routines
take joint arrays of shape ``(B, n)`` and loop over joints only, so the cost
of a call grows with chain length and not with batch size.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import ContractViolation

_UNIT_TOL = 1e-6


# ---------------------------------------------------------------------------
# quaternion / rotation helpers
# ---------------------------------------------------------------------------

def quat_multiply(a, b):
    """Hamilton product ``a ⊗ b``; broadcasts over leading axes."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    aw, ax, ay, az = np.moveaxis(a, -1, 0)
    bw, bx, by, bz = np.moveaxis(b, -1, 0)
    return np.stack([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ], axis=-1)


def quat_conjugate(q):
    q = np.asarray(q, dtype=float)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def quat_to_matrix(q):
    q = np.asarray(q, dtype=float)
    return Rotation.from_quat(q, scalar_first=True).as_matrix()


def matrix_to_quat(R):
    """Unit quaternion(s) for rotation matrix(es), canonicalized to ``w >= 0``."""
    q = Rotation.from_matrix(np.asarray(R, dtype=float)).as_quat(scalar_first=True)
    return _canonical(q)


def quat_from_axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    half = 0.5 * angle
    return np.concatenate([[np.cos(half)], np.sin(half) * axis])


def _canonical(q):
    q = np.array(q, dtype=float)
    flip = q[..., 0] < 0.0
    q[flip] *= -1.0
    return q


def _check_unit(q, name="quaternion"):
    q = np.asarray(q, dtype=float)
    if q.shape[-1] != 4:
        raise ContractViolation(f"{name} must have 4 components, got shape {q.shape}")
    if np.any(np.abs(np.linalg.norm(q, axis=-1) - 1.0) > _UNIT_TOL):
        raise ContractViolation(f"{name} is not a unit quaternion")
    return q


def quaternion_displacement(q1, q2):
    """Rotation taking ``q1`` to ``q2``: ``q1⁻¹ ⊗ q2`` with ``w >= 0``.

    Raises ContractViolation when an input deviates from unit norm by more
    than 1e-6.
    """
    q1 = _check_unit(q1, "q1")
    q2 = _check_unit(q2, "q2")
    return _canonical(quat_multiply(quat_conjugate(q1), q2))


def rotation_angle(q) -> float | np.ndarray:
    """Angle of the rotation encoded by ``q``, in ``[0, pi]``."""
    q = np.asarray(q, dtype=float)
    vec = np.linalg.norm(q[..., 1:], axis=-1)
    return 2.0 * np.arctan2(vec, np.abs(q[..., 0]))


def quat_to_rotvec(q):
    """Axis-angle vector of ``q`` on the ``w >= 0`` hemisphere (batched)."""
    q = _canonical(q)
    vec = q[..., 1:]
    s = np.linalg.norm(vec, axis=-1)
    angle = 2.0 * np.arctan2(s, q[..., 0])
    small = s < 1e-12
    scale = np.where(small, 2.0 / np.where(small, q[..., 0], 1.0), angle / np.where(small, 1.0, s))
    return vec * scale[..., None]


def skew(v):
    v = np.asarray(v, dtype=float)
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


# ---------------------------------------------------------------------------
# poses and models
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform: position in meters, orientation as ``(w, x, y, z)``."""

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    orientation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))

    def __post_init__(self):
        p = np.array(self.position, dtype=float).reshape(3)
        q = np.array(self.orientation, dtype=float).reshape(4)
        n = np.linalg.norm(q)
        if not np.all(np.isfinite(p)) or not np.isfinite(n) or n < 1e-12:
            raise ContractViolation("pose must have finite position and nonzero quaternion")
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "orientation", q / n)

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    @classmethod
    def from_matrix(cls, R, p) -> "Pose":
        return cls(p, matrix_to_quat(R))

    @cached_property
    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.orientation)

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.position
        return T

    def compose(self, other: "Pose") -> "Pose":
        return Pose(self.position + self.rotation @ other.position,
                    quat_multiply(self.orientation, other.orientation))

    __matmul__ = compose

    def inverse(self) -> "Pose":
        qi = quat_conjugate(self.orientation)
        return Pose(-(quat_to_matrix(qi) @ self.position), qi)

    def __repr__(self):
        return f"Pose(position={self.position.tolist()}, orientation={self.orientation.tolist()})"


@dataclass(frozen=True, eq=False)
class Joint:
    """Revolute joint: rotation about ``axis`` after the fixed ``origin`` transform."""

    axis: np.ndarray
    origin: Pose
    q_min: float
    q_max: float
    vel_max: float
    acc_max: float
    name: str = ""

    def __post_init__(self):
        axis = np.array(self.axis, dtype=float).reshape(3)
        norm = np.linalg.norm(axis)
        if norm < 1e-12:
            raise ContractViolation(f"joint {self.name!r} has a zero axis")
        object.__setattr__(self, "axis", axis / norm)
        if not self.q_min < self.q_max:
            raise ContractViolation(f"joint {self.name!r}: q_min must be < q_max")
        if not (self.vel_max > 0 and self.acc_max > 0):
            raise ContractViolation(f"joint {self.name!r}: vel_max and acc_max must be > 0")


@dataclass(frozen=True, eq=False)
class ChainModel:
    """A serial arm. ``link_spheres[0]`` belongs to the base link, ``link_spheres[i]``
    to the link driven by joint ``i`` (1-based); each entry is a ``(k, 4)`` array of
    ``(cx, cy, cz, radius)`` in that link's frame.
    """

    joints: tuple
    tcp: Pose = field(default_factory=Pose)
    link_spheres: tuple = ()
    collision_exclusions: frozenset = frozenset()
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "joints", tuple(self.joints))
        spheres = list(self.link_spheres)
        if len(spheres) > self.dof + 1:
            raise ContractViolation(f"chain {self.name!r}: more sphere lists than links")
        spheres += [np.zeros((0, 4))] * (self.dof + 1 - len(spheres))
        clean = []
        for s in spheres:
            s = np.array(s, dtype=float).reshape(-1, 4)
            if np.any(s[:, 3] <= 0):
                raise ContractViolation(f"chain {self.name!r}: sphere radii must be > 0")
            clean.append(s)
        object.__setattr__(self, "link_spheres", tuple(clean))
        excl = frozenset(tuple(sorted(p)) for p in self.collision_exclusions)
        object.__setattr__(self, "collision_exclusions", excl)

    @property
    def dof(self) -> int:
        return len(self.joints)

    @cached_property
    def q_min(self):
        return np.array([j.q_min for j in self.joints], dtype=float)

    @cached_property
    def q_max(self):
        return np.array([j.q_max for j in self.joints], dtype=float)

    @cached_property
    def vel_max(self):
        return np.array([j.vel_max for j in self.joints], dtype=float)

    @cached_property
    def acc_max(self):
        return np.array([j.acc_max for j in self.joints], dtype=float)

    @cached_property
    def _origin_R(self):
        return [j.origin.rotation for j in self.joints]

    @cached_property
    def _tcp_R(self):
        return self.tcp.rotation

    @cached_property
    def _joint_terms(self):
        # origin rotation O times the Rodrigues pieces: O, O K, O K^2
        out = []
        for j, O in zip(self.joints, self._origin_R):
            K = skew(j.axis)
            out.append((O, O @ K, O @ K @ K))
        return out


@dataclass(frozen=True, eq=False)
class DualArmSystem:
    """Reference robot ``robot_a`` and tool robot ``robot_b`` on fixed bases.

    Combined joint vectors list robot A's joints first.
    """

    robot_a: ChainModel
    robot_b: ChainModel
    base_a: Pose = field(default_factory=Pose)
    base_b: Pose = field(default_factory=Pose)

    @property
    def n_a(self) -> int:
        return self.robot_a.dof

    @property
    def n_b(self) -> int:
        return self.robot_b.dof

    @property
    def n_total(self) -> int:
        return self.n_a + self.n_b

    @cached_property
    def q_min(self):
        return np.concatenate([self.robot_a.q_min, self.robot_b.q_min])

    @cached_property
    def q_max(self):
        return np.concatenate([self.robot_a.q_max, self.robot_b.q_max])

    @cached_property
    def vel_max(self):
        return np.concatenate([self.robot_a.vel_max, self.robot_b.vel_max])

    @cached_property
    def acc_max(self):
        return np.concatenate([self.robot_a.acc_max, self.robot_b.acc_max])

    def split(self, q):
        q = np.asarray(q)
        return q[..., : self.n_a], q[..., self.n_a:]

    def check(self, q, batch: bool = False) -> np.ndarray:
        """Validate shape/finiteness of a combined config (or batch of them)."""
        return _check_q(q, self.n_total, batch)

    def within_limits(self, q, tol: float = 1e-12):
        q = np.asarray(q, dtype=float)
        return np.all((q >= self.q_min - tol) & (q <= self.q_max + tol), axis=-1)


def _check_q(q, n, batch=False):
    q = np.asarray(q, dtype=float)
    want = 2 if batch else 1
    if q.ndim != want or q.shape[-1] != n:
        raise ContractViolation(f"expected joint array with last dimension {n}, got shape {q.shape}")
    if not np.all(np.isfinite(q)):
        raise ContractViolation("joint values must be finite")
    return q


# ---------------------------------------------------------------------------
# batched forward kinematics
# ---------------------------------------------------------------------------

class ChainFrames(NamedTuple):
    link_R: np.ndarray  # (B, n+1, 3, 3), link 0 is the base
    link_p: np.ndarray  # (B, n+1, 3)
    tcp_R: np.ndarray   # (B, 3, 3)
    tcp_p: np.ndarray   # (B, 3)


def chain_frames(chain: ChainModel, Q, base: Pose | None = None) -> ChainFrames:
    Q = np.asarray(Q, dtype=float)
    B = Q.shape[0]
    base = base or Pose()
    R = np.broadcast_to(base.rotation, (B, 3, 3))
    p = np.broadcast_to(base.position, (B, 3))
    link_R = np.empty((B, chain.dof + 1, 3, 3))
    link_p = np.empty((B, chain.dof + 1, 3))
    link_R[:, 0] = R
    link_p[:, 0] = p
    for i, joint in enumerate(chain.joints):
        p = p + R @ joint.origin.position
        O, OK, OK2 = chain._joint_terms[i]
        s = np.sin(Q[:, i])[:, None, None]
        c = np.cos(Q[:, i])[:, None, None]
        R = R @ (O + s * OK + (1.0 - c) * OK2)
        link_R[:, i + 1] = R
        link_p[:, i + 1] = p
    tcp_p = p + R @ chain.tcp.position
    tcp_R = R @ chain._tcp_R
    return ChainFrames(link_R, link_p, tcp_R, tcp_p)


def jacobian_from_frames(chain: ChainModel, frames: ChainFrames) -> np.ndarray:
    """World-frame geometric Jacobians ``(B, 6, n)``, rows ``[linear; angular]``."""
    B = frames.tcp_p.shape[0]
    J = np.empty((B, 6, chain.dof))
    for i, joint in enumerate(chain.joints):
        z = frames.link_R[:, i + 1] @ joint.axis
        J[:, :3, i] = np.cross(z, frames.tcp_p - frames.link_p[:, i + 1])
        J[:, 3:, i] = z
    return J


def forward_kinematics(chain: ChainModel, q, base: Pose | None = None) -> Pose:
    """TCP pose of ``chain`` at ``q``, in the frame of ``base`` (world if given)."""
    q = _check_q(q, chain.dof)
    f = chain_frames(chain, q[None], base)
    return Pose.from_matrix(f.tcp_R[0], f.tcp_p[0])


def geometric_jacobian(chain: ChainModel, q, base: Pose | None = None) -> np.ndarray:
    q = _check_q(q, chain.dof)
    f = chain_frames(chain, q[None], base)
    return jacobian_from_frames(chain, f)[0]


# ---------------------------------------------------------------------------
# dual-arm relative kinematics
# ---------------------------------------------------------------------------

class DualState(NamedTuple):
    pA: np.ndarray
    RA: np.ndarray
    pB: np.ndarray
    RB: np.ndarray
    JA: np.ndarray | None
    JB: np.ndarray | None


def dual_state(sys: DualArmSystem, Q, jacobians: bool = False) -> DualState:
    QA, QB = sys.split(np.asarray(Q, dtype=float))
    fa = chain_frames(sys.robot_a, QA, sys.base_a)
    fb = chain_frames(sys.robot_b, QB, sys.base_b)
    JA = jacobian_from_frames(sys.robot_a, fa) if jacobians else None
    JB = jacobian_from_frames(sys.robot_b, fb) if jacobians else None
    return DualState(fa.tcp_p, fa.tcp_R, fb.tcp_p, fb.tcp_R, JA, JB)


def relative_from_state(st: DualState):
    """Tool TCP relative to reference TCP, expressed in the reference TCP frame."""
    RAt = np.swapaxes(st.RA, -1, -2)
    p_rel = (RAt @ (st.pB - st.pA)[..., None])[..., 0]
    R_rel = RAt @ st.RB
    return p_rel, R_rel


def relative_jacobian_from_state(st: DualState) -> np.ndarray:
    """``(B, 6, n_T)`` map from combined joint rates to the relative twist.

    Linear rows differentiate ``R_A^T (p_B - p_A)``; angular rows give the
    relative angular velocity, both in the reference TCP frame.
    """
    RAt = np.swapaxes(st.RA, -1, -2)
    d = (st.pB - st.pA)[:, :, None]
    JAv, JAw = st.JA[:, :3], st.JA[:, 3:]
    JBv, JBw = st.JB[:, :3], st.JB[:, 3:]
    lin_a = RAt @ (-JAv + np.cross(d, JAw, axis=1))
    ang_a = -(RAt @ JAw)
    lin_b = RAt @ JBv
    ang_b = RAt @ JBw
    return np.concatenate([
        np.concatenate([lin_a, lin_b], axis=2),
        np.concatenate([ang_a, ang_b], axis=2),
    ], axis=1)


def tcp_poses(sys: DualArmSystem, q) -> tuple[Pose, Pose]:
    q = sys.check(q)
    st = dual_state(sys, q[None])
    return Pose.from_matrix(st.RA[0], st.pA[0]), Pose.from_matrix(st.RB[0], st.pB[0])


def relative_pose(sys: DualArmSystem, q) -> Pose:
    q = sys.check(q)
    p_rel, R_rel = relative_from_state(dual_state(sys, q[None]))
    return Pose.from_matrix(R_rel[0], p_rel[0])


def relative_jacobian(sys: DualArmSystem, q) -> np.ndarray:
    q = sys.check(q)
    return relative_jacobian_from_state(dual_state(sys, q[None], jacobians=True))[0]


def pose_error(a: Pose, b: Pose) -> tuple[float, float]:
    """Position distance (m) and rotation angle (rad) between two poses."""
    return (float(np.linalg.norm(a.position - b.position)),
            float(rotation_angle(quaternion_displacement(a.orientation, b.orientation))))


def stack_poses(poses: Sequence[Pose]):
    return (np.stack([p.position for p in poses]), np.stack([p.rotation for p in poses]))
