"""Comparison matrix of IK variants, timed with both execution-time oracles.

Each trial samples a start ``q_0`` and a reference ``q_t``; the target is the
relative TCP pose of ``q_t``. Every method solves the same trials and its
answer is timed from ``q_0`` with the collision-blind and the
collision-aware oracle. The ``reference`` row times ``q_t`` itself.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .approximator import MlpModel
from .collision import CollisionWorld
from .dataset import record_seed, sample_pairs
from .errors import ContractViolation, NoSolutionError, PlanningError
from .kinematics import relative_pose, tcp_poses
from .solver import SolverConfig, solve
from .timing import plan_collision_free, synchronized_durations

log = logging.getLogger(__name__)

BENCH_FORMAT = "timeik-bench"
BENCH_VERSION = 1


@dataclass(frozen=True)
class Method:
    label: str
    absolute: bool
    time_term: str
    selection: str
    model: str | None  # "blind", "cf" or None
    description: str


METHODS = {
    "A": Method("A", True, "distance", "best-cost", None, "absolute targets, joint distance"),
    "B": Method("B", True, "approximator", "best-time", "blind", "absolute targets, approximator, best time"),
    "C": Method("C", False, "distance", "best-cost", None, "relative target, joint distance"),
    "D": Method("D", False, "approximator", "best-time", "blind", "relative target, approximator, best time"),
    "E": Method("E", False, "approximator", "best-cost", "blind", "relative target, approximator, best cost"),
    "F": Method("F", False, "approximator", "best-pose", "blind", "relative target, approximator, best pose"),
    "G": Method("G", False, "approximator", "best-time", "cf",
                "relative target, collision-aware approximator, best time"),
}


@dataclass
class BenchmarkSpec:
    scene: str
    methods: list
    trials: int = 100
    seed: int = 0
    out: str | None = None

    def __post_init__(self):
        if not self.methods:
            raise ContractViolation("at least one method is required")
        if self.trials < 1:
            raise ContractViolation("trials must be >= 1")
        bad = [m for m in self.methods if m != "reference" and m not in METHODS]
        if bad:
            raise ContractViolation(f"unknown methods {bad}; choose from reference, {', '.join(METHODS)}")


@dataclass
class MethodResult:
    label: str
    t_blind: list = field(default_factory=list)
    t_cf: list = field(default_factory=list)
    position_error: list = field(default_factory=list)
    success: list = field(default_factory=list)

    def summary(self) -> dict:
        ok = np.array(self.success, dtype=bool)

        def mean(v):
            v = np.asarray(v, dtype=float)[ok]
            return float(np.mean(v)) if len(v) else float("nan")

        return {"method": self.label, "t_blind": mean(self.t_blind), "t_cf": mean(self.t_cf),
                "position_error": mean(self.position_error),
                "success_rate": 100.0 * float(ok.mean()) if len(ok) else 0.0}


def _time_target(world, q_0, q, seed):
    t_blind = float(synchronized_durations(world.sys, q_0, q))
    try:
        t_cf = plan_collision_free(world, q_0, q, seed=seed).duration
    except (PlanningError, ContractViolation):
        t_cf = float("nan")
    return t_blind, t_cf


def run_trial(world: CollisionWorld, method: str, q_0, q_ref, trial_seed: int, base: SolverConfig,
              models: dict) -> tuple:
    """``(t_blind, t_cf, position_error, success)`` for one method on one trial."""
    sys = world.sys
    target = relative_pose(sys, q_ref)
    if method == "reference":
        t_blind, t_cf = _time_target(world, q_0, q_ref, trial_seed)
        return t_blind, t_cf, 0.0, bool(np.isfinite(t_cf))
    m = METHODS[method]
    model = models.get(m.model) if m.model else None
    if m.model and model is None:
        raise ContractViolation(f"method {method} needs the {m.model} approximator model")
    config = replace(base, time_term=m.time_term, selection=m.selection, seed=trial_seed)
    absolute = tcp_poses(sys, q_ref) if m.absolute else None
    try:
        report = solve(sys, world, q_0, None if m.absolute else target, config, model,
                       absolute_targets=absolute)
    except NoSolutionError:
        return float("nan"), float("nan"), float("nan"), False
    q = report.best
    p_err = float(np.linalg.norm(relative_pose(sys, q).position - target.position))
    if not report.best_feasible:
        return float("nan"), float("nan"), p_err, False
    t_blind, t_cf = _time_target(world, q_0, q, trial_seed)
    return t_blind, t_cf, p_err, bool(np.isfinite(t_cf))


def run_benchmark(world: CollisionWorld, spec: BenchmarkSpec, base: SolverConfig,
                  models: dict | None = None, threads: int = 1) -> dict:
    models = models or {}
    Q0, QT = sample_pairs(world, spec.trials, spec.seed)
    seeds = [record_seed(spec.seed, i) for i in range(spec.trials)]
    results = {}
    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    try:
        for method in spec.methods:
            res = MethodResult(method)

            def one(i, method=method):
                return run_trial(world, method, Q0[i], QT[i], seeds[i], base, models)

            rows = (pool.map if pool else map)(one, range(spec.trials))
            for t_blind, t_cf, p_err, ok in rows:
                res.t_blind.append(t_blind)
                res.t_cf.append(t_cf)
                res.position_error.append(p_err)
                res.success.append(ok)
            results[method] = res
            log.info("method %s: %s", method, res.summary())
    finally:
        if pool:
            pool.shutdown()
    return {
        "format": BENCH_FORMAT,
        "version": BENCH_VERSION,
        "scene": spec.scene,
        "trials": spec.trials,
        "seed": spec.seed,
        "solver": base.to_dict(),
        "summary": [results[m].summary() for m in spec.methods],
        "per_trial": {m: {"t_blind": r.t_blind, "t_cf": r.t_cf, "position_error": r.position_error,
                          "success": r.success} for m, r in results.items()},
    }


def format_table(result: dict) -> str:
    lines = [f"{'method':<10}{'t_blind [s]':>13}{'t_cf [s]':>11}{'pos err [m]':>13}{'success %':>11}"]
    for row in result["summary"]:
        lines.append(f"{row['method']:<10}{row['t_blind']:>13.3f}{row['t_cf']:>11.3f}"
                     f"{row['position_error']:>13.2e}{row['success_rate']:>11.1f}")
    return "\n".join(lines)


def save_result(result: dict, path) -> None:
    # NaN is not valid JSON; failed trials are written as null
    def clean(x):
        if isinstance(x, float) and not np.isfinite(x):
            return None
        if isinstance(x, dict):
            return {k: clean(v) for k, v in x.items()}
        if isinstance(x, list):
            return [clean(v) for v in x]
        return x

    Path(path).write_text(json.dumps(clean(result), indent=1))


def load_result(path) -> dict:
    d = json.loads(Path(path).read_text())
    if d.get("format") != BENCH_FORMAT or d.get("version") != BENCH_VERSION:
        raise ContractViolation(f"{path}: not a supported benchmark result")
    return d


def load_models(blind: str | None, cf: str | None) -> dict:
    out = {}
    if blind:
        out["blind"] = MlpModel.load(blind)
    if cf:
        out["cf"] = MlpModel.load(cf)
    return out
