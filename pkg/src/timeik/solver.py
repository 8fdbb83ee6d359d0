"""Batched multi-start gradient IK with an execution-time term.

Every candidate descends the same objective independently:

    f(q) = w_p*chi_p + w_o*chi_o + w_mt*chi_mt + w_b*chi_b

where ``chi_p``/``chi_o`` measure the relative (or per-arm absolute) pose
error, ``chi_mt`` estimates the motion time from ``q_0`` and ``chi_b``
penalizes closeness to joint limits. After the iterations every candidate is
checked for pose convergence and collisions, and one is selected.
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml
from scipy.spatial.transform import Rotation

from .approximator import MlpModel, encode
from .collision import CollisionWorld, HaltonSampler, sample_collision_free_batch
from .dataset import halton_start
from .errors import ContractViolation, NoSolutionError
from .kinematics import (DualArmSystem, Pose, dual_state, relative_from_state,
                         relative_jacobian_from_state)
from .timing import synchronized_durations

log = logging.getLogger(__name__)

TIME_TERMS = ("none", "distance", "approximator")
SELECTIONS = ("best-pose", "best-time", "best-cost")
REPORT_FORMAT = "timeik-solve-report"
REPORT_VERSION = 1


@dataclass
class SolverConfig:
    batch_size: int = 4096
    iterations: int = 500
    w_p: float = 2000.0
    w_o: float = 2500.0
    w_mt: float | None = None  # None picks 250 (distance) or 500 (approximator)
    w_b: float = 100.0
    limit_margin: float = 0.1
    step_magnitudes: tuple = (0.01, 0.03, 0.1, 0.3, 1.0)
    armijo: float = 1e-4
    curvature: float = 0.9
    position_threshold: float = 5e-3
    orientation_threshold: float = 5e-2
    time_term: str = "none"
    selection: str = "best-cost"
    seed: int = 0
    infeasible_offset: float = 1e6
    polish_iterations: int = 150
    max_seed_tries: int = 200_000

    def __post_init__(self):
        self.step_magnitudes = tuple(float(m) for m in self.step_magnitudes)
        if self.batch_size < 1 or self.iterations < 0 or self.polish_iterations < 0:
            raise ContractViolation("batch_size must be >= 1 and iteration counts >= 0")
        for name in ("w_p", "w_o", "w_b"):
            if getattr(self, name) < 0:
                raise ContractViolation(f"{name} must be >= 0")
        if self.w_mt is not None and self.w_mt < 0:
            raise ContractViolation("w_mt must be >= 0")
        if not (self.position_threshold > 0 and self.orientation_threshold > 0 and self.limit_margin > 0):
            raise ContractViolation("thresholds and limit margin must be > 0")
        m = self.step_magnitudes
        if not m or any(x <= 0 for x in m) or list(m) != sorted(m):
            raise ContractViolation("step magnitudes must be positive and sorted ascending")
        if not 0 < self.armijo < self.curvature < 1:
            raise ContractViolation("need 0 < armijo < curvature < 1")
        if self.time_term not in TIME_TERMS:
            raise ContractViolation(f"time_term must be one of {TIME_TERMS}")
        if self.selection not in SELECTIONS:
            raise ContractViolation(f"selection must be one of {SELECTIONS}")

    @property
    def time_weight(self) -> float:
        if self.w_mt is not None:
            return float(self.w_mt)
        return {"none": 0.0, "distance": 250.0, "approximator": 500.0}[self.time_term]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["step_magnitudes"] = list(self.step_magnitudes)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SolverConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ContractViolation(f"unknown solver config keys: {sorted(unknown)}")
        return cls(**d)

    def save(self, path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))

    @classmethod
    def load(cls, path) -> "SolverConfig":
        return cls.from_dict(yaml.safe_load(Path(path).read_text()) or {})


@dataclass(frozen=True)
class ObjectiveBreakdown:
    chi_p: float
    chi_o: float
    chi_mt: float
    chi_b: float
    total: float


# ---------------------------------------------------------------------------
# objective terms (scalar API)
# ---------------------------------------------------------------------------

def _rotvec(R):
    """Rotation vectors of rotation matrices ``(..., 3, 3)``."""
    v = 0.5 * np.stack([R[..., 2, 1] - R[..., 1, 2], R[..., 0, 2] - R[..., 2, 0],
                        R[..., 1, 0] - R[..., 0, 1]], axis=-1)
    s = np.linalg.norm(v, axis=-1)
    c = 0.5 * (np.trace(R, axis1=-2, axis2=-1) - 1.0)
    angle = np.arctan2(s, c)
    small = s < 1e-8
    factor = np.where(small, 1.0, angle / np.where(small, 1.0, s))
    phi = v * factor[..., None]
    flip = small & (c < 0)
    if np.any(flip):
        # near a half turn the skew part vanishes; use the stable general routine
        phi[flip] = Rotation.from_matrix(R[flip]).as_rotvec()
    return phi


def _orientation_terms(R, R_tgt):
    """Squared angle of ``R_tgt^T R`` and the rotation vector mapped back by ``R_tgt``."""
    R_e = np.swapaxes(R_tgt, -1, -2) @ R
    phi = _rotvec(R_e)
    w = (R_tgt @ phi[..., None])[..., 0]
    return np.einsum("...i,...i->...", phi, phi), w


def position_cost(sys: DualArmSystem, q, target_relative: Pose) -> float:
    p_rel, _ = relative_from_state(dual_state(sys, sys.check(q)[None]))
    e = p_rel[0] - target_relative.position
    return float(e @ e)


def orientation_cost(sys: DualArmSystem, q, target_relative: Pose) -> float:
    _, R_rel = relative_from_state(dual_state(sys, sys.check(q)[None]))
    c, _ = _orientation_terms(R_rel[0], target_relative.rotation)
    return float(c)


def weighted_distance_cost(q, q_0, vel_limits) -> float:
    """Sum of ``(q_i - q0_i)**2 / vel_i**2``: squared velocity-limited move time per joint."""
    d = np.asarray(q, dtype=float) - np.asarray(q_0, dtype=float)
    v = np.asarray(vel_limits, dtype=float)
    return float(np.sum(d * d / (v * v)))


def _limit_terms(Q, q_min, q_max, margin):
    lo = np.maximum(q_min + margin - Q, 0.0)
    hi = np.maximum(Q - (q_max - margin), 0.0)
    return np.sum(lo * lo + hi * hi, axis=-1), 2.0 * (hi - lo)


def limit_cost(q, limits, margin: float) -> float:
    """Quadratic penalty on penetration into the ``margin`` band inside each limit."""
    if not margin > 0:
        raise ContractViolation("margin must be > 0")
    q_min, q_max = limits
    c, _ = _limit_terms(np.asarray(q, dtype=float), np.asarray(q_min), np.asarray(q_max), margin)
    return float(c)


# ---------------------------------------------------------------------------
# batched objective
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class Objective:
    """Batched cost/gradient for one problem.

    ``targets`` is either a relative pose, or a pair of world-frame TCP poses
    for the per-arm (absolute) formulation.
    """

    sys: DualArmSystem
    q_0: np.ndarray
    target: Pose | None
    config: SolverConfig
    model: MlpModel | None = None
    absolute_targets: tuple | None = None
    polish: bool = False  # pose terms only; hard limits are still kept by clamping

    def __post_init__(self):
        if (self.target is None) == (self.absolute_targets is None):
            raise ContractViolation("give exactly one of a relative target or absolute targets")
        if self.config.time_term == "approximator":
            if self.model is None:
                raise ContractViolation("approximator time term needs a model")
            if self.model.n_joints != self.sys.n_total:
                raise ContractViolation(
                    f"model expects {self.model.n_joints} joints, system has {self.sys.n_total}")

    def pose_terms(self, Q, grad: bool):
        st = dual_state(self.sys, Q, jacobians=grad)
        if self.absolute_targets is None:
            p, R = relative_from_state(st)
            e = p - self.target.position
            cp = np.einsum("bi,bi->b", e, e)
            co, w = _orientation_terms(R, self.target.rotation)
            if not grad:
                return cp, co, None, None
            J = relative_jacobian_from_state(st)
            gp = 2.0 * np.einsum("bi,bij->bj", e, J[:, :3])
            go = 2.0 * np.einsum("bi,bij->bj", w, J[:, 3:])
            return cp, co, gp, go
        ta, tb = self.absolute_targets
        ea, eb = st.pA - ta.position, st.pB - tb.position
        cp = np.einsum("bi,bi->b", ea, ea) + np.einsum("bi,bi->b", eb, eb)
        coa, wa = _orientation_terms(st.RA, ta.rotation)
        cob, wb = _orientation_terms(st.RB, tb.rotation)
        if not grad:
            return cp, coa + cob, None, None
        gp = 2.0 * np.concatenate([np.einsum("bi,bij->bj", ea, st.JA[:, :3]),
                                   np.einsum("bi,bij->bj", eb, st.JB[:, :3])], axis=1)
        go = 2.0 * np.concatenate([np.einsum("bi,bij->bj", wa, st.JA[:, 3:]),
                                   np.einsum("bi,bij->bj", wb, st.JB[:, 3:])], axis=1)
        return cp, coa + cob, gp, go

    def time_terms(self, Q, grad: bool):
        term = self.config.time_term
        if term == "distance":
            v2 = self.sys.vel_max ** 2
            d = Q - self.q_0
            return np.sum(d * d / v2, axis=1), (2.0 * d / v2 if grad else None)
        if term == "approximator":
            X = encode(np.broadcast_to(self.q_0, Q.shape), Q)
            if grad:
                return self.model.input_gradient_batch(X)
            return self.model.predict_batch(X), None
        return np.zeros(len(Q)), (np.zeros_like(Q) if grad else None)

    def evaluate(self, Q, grad: bool = True):
        """Per-row total cost, gradient (or None) and the four raw terms."""
        c = self.config
        cp, co, gp, go = self.pose_terms(Q, grad)
        ct, gt = self.time_terms(Q, grad)
        cb, gb = _limit_terms(Q, self.sys.q_min, self.sys.q_max, c.limit_margin)
        wt = 0.0 if self.polish else c.time_weight
        wb = 0.0 if self.polish else c.w_b
        f = c.w_p * cp + c.w_o * co + wt * ct + wb * cb
        g = c.w_p * gp + c.w_o * go + wt * gt + wb * gb if grad else None
        return f, g, (cp, co, ct, cb)


def total_cost(sys: DualArmSystem, q, q_0, target_relative: Pose, config: SolverConfig,
               model: MlpModel | None = None) -> ObjectiveBreakdown:
    q = sys.check(q)
    obj = Objective(sys, sys.check(q_0), target_relative, config, model)
    f, _, (cp, co, ct, cb) = obj.evaluate(q[None], grad=False)
    return ObjectiveBreakdown(float(cp[0]), float(co[0]), float(ct[0]), float(cb[0]), float(f[0]))


def total_cost_gradient(sys: DualArmSystem, q, q_0, target_relative: Pose, config: SolverConfig,
                        model: MlpModel | None = None) -> np.ndarray:
    q = sys.check(q)
    obj = Objective(sys, sys.check(q_0), target_relative, config, model)
    return obj.evaluate(q[None])[1][0]


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class DescentTrace:
    cost: list = field(default_factory=list)       # per iteration, (B,) before the step
    accepted: list = field(default_factory=list)   # per iteration, (B,) bool
    polish: list = field(default_factory=list)


def descend(obj: Objective, Q, trace: DescentTrace | None = None) -> tuple[np.ndarray, int]:
    """Projected gradient descent with a per-candidate scaled magnitude line search.

    Each iteration tries every magnitude along the max-norm-normalized
    negative gradient, clamps to the joint box and keeps the lowest-cost
    trial that passes the Armijo test. A failed weak curvature test at the
    accepted point grows the candidate's scale; an iteration without any
    Armijo-valid trial shrinks it and leaves the candidate in place.
    """
    c = obj.config
    sys = obj.sys
    Q = np.clip(np.array(Q, dtype=float), sys.q_min, sys.q_max)
    B = len(Q)
    mags = np.asarray(c.step_magnitudes)
    scale = np.ones(B)
    total = c.iterations
    polish_from = total - min(c.polish_iterations, total)
    f, g, _ = obj.evaluate(Q)
    used = 0
    for it in range(total):
        if it == polish_from:
            obj.polish = True
            f, g, _ = obj.evaluate(Q)
            scale[:] = 1.0
        gmax = np.max(np.abs(g), axis=1)
        active = gmax > 0
        if not active.any():
            break
        used = it + 1
        d = np.where(active[:, None], -g / np.where(active, gmax, 1.0)[:, None], 0.0)
        best_f = f.copy()
        best_Q = Q.copy()
        moved = np.zeros(B, dtype=bool)
        pick = np.full(B, -1)
        # all magnitudes are evaluated as one stacked batch
        trials = np.clip(Q + (scale[None, :, None] * mags[:, None, None]) * d, sys.q_min, sys.q_max)
        f_all, _, _ = obj.evaluate(trials.reshape(-1, Q.shape[1]), grad=False)
        f_all = f_all.reshape(len(mags), B)
        for k in range(len(mags)):
            trial, ft = trials[k], f_all[k]
            slope = np.einsum("bi,bi->b", g, trial - Q)
            ok = active & (ft <= f + c.armijo * slope) & (ft < best_f) & (slope < 0)
            best_f = np.where(ok, ft, best_f)
            best_Q[ok] = trial[ok]
            pick[ok] = k
            moved |= ok
        if trace is not None:
            trace.cost.append(f.copy())
            trace.accepted.append(moved.copy())
            trace.polish.append(obj.polish)
        step = best_Q - Q
        Q = best_Q
        f_new, g_new, _ = obj.evaluate(Q)
        # weak curvature: the directional derivative must have risen enough
        curv_fail = moved & (np.einsum("bi,bi->b", g_new, step)
                             < c.curvature * np.einsum("bi,bi->b", g, step))
        scale = np.where(curv_fail, np.minimum(scale * 3.0, 1e3), scale)
        # re-center the magnitude grid when the smallest trial keeps winning
        scale = np.where(~curv_fail & (pick == 0), np.maximum(scale * 0.3, 1e-12), scale)
        scale = np.where(active & ~moved, np.maximum(scale * 0.1, 1e-12), scale)
        f, g = f_new, g_new
    obj.polish = False
    return Q, used


# ---------------------------------------------------------------------------
# solve / report
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class SolveReport:
    best: np.ndarray | None
    best_index: int
    best_feasible: bool
    candidates: np.ndarray          # (K, n_T) converged candidates
    position_error: np.ndarray      # (K,) m
    orientation_error: np.ndarray   # (K,) rad
    cost: np.ndarray                # (K,)
    predicted_time: np.ndarray      # (K,) s, clamped at 0
    feasible: np.ndarray            # (K,) bool
    iterations: int
    selection: str
    wall_time: float = 0.0
    trace: DescentTrace | None = None

    def to_dict(self) -> dict:
        """Structured form; wall time is left out so that reports are reproducible."""
        return {
            "format": REPORT_FORMAT,
            "version": REPORT_VERSION,
            "selection": self.selection,
            "iterations": self.iterations,
            "best_index": self.best_index,
            "best_feasible": self.best_feasible,
            "best": None if self.best is None else self.best.tolist(),
            "candidates": [
                {"q": q.tolist(), "position_error": float(pe), "orientation_error": float(oe),
                 "cost": float(c), "predicted_time": float(t), "feasible": bool(fe)}
                for q, pe, oe, c, t, fe in zip(self.candidates, self.position_error,
                                               self.orientation_error, self.cost,
                                               self.predicted_time, self.feasible)
            ],
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def from_dict(cls, d: dict) -> "SolveReport":
        if d.get("format") != REPORT_FORMAT or d.get("version") != REPORT_VERSION:
            raise ContractViolation("not a supported solve report")
        c = d["candidates"]
        return cls(
            None if d["best"] is None else np.array(d["best"]), d["best_index"], d["best_feasible"],
            np.array([x["q"] for x in c]).reshape(len(c), -1),
            np.array([x["position_error"] for x in c]), np.array([x["orientation_error"] for x in c]),
            np.array([x["cost"] for x in c]), np.array([x["predicted_time"] for x in c]),
            np.array([x["feasible"] for x in c], dtype=bool), d["iterations"], d["selection"])

    @classmethod
    def load(cls, path) -> "SolveReport":
        return cls.from_dict(json.loads(Path(path).read_text()))


def seed_candidates(world: CollisionWorld, q_0, config: SolverConfig) -> np.ndarray:
    """``q_0`` followed by ``batch_size - 1`` free Halton samples."""
    n = world.sys.n_total
    if config.batch_size == 1:
        return q_0[None].copy()
    sampler = HaltonSampler(n, halton_start(config.seed))
    S = sample_collision_free_batch(world, sampler, config.batch_size - 1, config.max_seed_tries)
    return np.vstack([q_0, S])


def pose_errors(obj: Objective, Q) -> tuple[np.ndarray, np.ndarray]:
    """Position (m) and orientation (rad) errors; per-arm worst case for absolute targets."""
    st = dual_state(obj.sys, Q)
    if obj.absolute_targets is None:
        p, R = relative_from_state(st)
        pe = np.linalg.norm(p - obj.target.position, axis=1)
        co, _ = _orientation_terms(R, obj.target.rotation)
        return pe, np.sqrt(co)
    ta, tb = obj.absolute_targets
    pe = np.maximum(np.linalg.norm(st.pA - ta.position, axis=1), np.linalg.norm(st.pB - tb.position, axis=1))
    ca, _ = _orientation_terms(st.RA, ta.rotation)
    cb, _ = _orientation_terms(st.RB, tb.rotation)
    return pe, np.sqrt(np.maximum(ca, cb))


def predicted_times(obj: Objective, Q) -> np.ndarray:
    """Approximator prediction when a model is set, else the synchronized straight-line time."""
    if obj.model is not None:
        return obj.model.predict_batch(encode(np.broadcast_to(obj.q_0, Q.shape), Q))
    return synchronized_durations(obj.sys, obj.q_0, Q)


def solve(sys: DualArmSystem, world: CollisionWorld, q_0, target_relative: Pose | None,
          config: SolverConfig, model: MlpModel | None = None, *,
          absolute_targets: tuple | None = None, record_trace: bool = False) -> SolveReport:
    """Run the multi-start optimizer and select one candidate.

    Raises NoSolutionError when no candidate meets the pose thresholds.
    """
    start = time.perf_counter()
    q_0 = sys.check(q_0)
    if world.sys is not sys:
        raise ContractViolation("world belongs to a different system")
    if not sys.within_limits(q_0, 1e-9):
        raise ContractViolation("q_0 is outside the joint limits")
    obj = Objective(sys, q_0, target_relative, config, model, absolute_targets)
    Q = seed_candidates(world, q_0, config)
    trace = DescentTrace() if record_trace else None
    Q, used = descend(obj, Q, trace)

    f, _, _ = obj.evaluate(Q, grad=False)
    pe, oe = pose_errors(obj, Q)
    converged = (pe < config.position_threshold) & (oe < config.orientation_threshold)
    free = ~world.collisions(Q)
    feasible = converged & free
    t_pred = predicted_times(obj, Q)
    if not converged.any():
        i = int(np.argmin(pe + oe))
        raise NoSolutionError(
            f"no candidate met the pose thresholds (best position error {pe[i]:.4g} m, "
            f"orientation error {oe[i]:.4g} rad)", Q[i].copy(), float(pe[i]), float(oe[i]))

    metric = {"best-pose": pe + oe, "best-time": t_pred, "best-cost": f}[config.selection]
    idx = np.flatnonzero(converged)
    score = metric[idx] + np.where(feasible[idx], 0.0, config.infeasible_offset)
    k = int(np.argmin(score))
    best = int(idx[k])
    log.debug("solve: %d/%d converged, %d feasible", len(idx), len(Q), int(feasible.sum()))
    return SolveReport(
        best=Q[best].copy(), best_index=k, best_feasible=bool(feasible[best]),
        candidates=Q[idx], position_error=pe[idx], orientation_error=oe[idx], cost=f[idx],
        predicted_time=np.maximum(t_pred[idx], 0.0), feasible=feasible[idx],
        iterations=used, selection=config.selection,
        wall_time=time.perf_counter() - start, trace=trace)


@dataclass(eq=False)
class SolveProblem:
    world: CollisionWorld
    q_0: np.ndarray
    target: Pose | None
    absolute_targets: tuple | None = None


def batch_solve(problems, config: SolverConfig, model: MlpModel | None = None,
                threads: int = 1) -> list:
    """Solve independent problems in order; failures are returned in place as exceptions."""
    def run(p):
        try:
            return solve(p.world.sys, p.world, p.q_0, p.target, config, model,
                         absolute_targets=p.absolute_targets)
        except (NoSolutionError, ContractViolation) as exc:
            return exc

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(run, problems))
    return [run(p) for p in problems]
