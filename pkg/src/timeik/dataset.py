"""Training data for the time approximator: sampled configuration pairs with
collision-blind and collision-aware execution times."""

from __future__ import annotations

import csv
import logging
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .collision import CollisionWorld, HaltonSampler, scale_to_limits
from .errors import ContractViolation, ModelFileError, NoFreeSampleError, PlanningError
from .timing import PLAN_BUDGET, plan_collision_free, synchronized_durations

log = logging.getLogger(__name__)

DATASET_MAGIC = b"TAIKDSET"
DATASET_VERSION = 1
_HEADER = struct.Struct("<8sIIQ")


@dataclass(frozen=True, eq=False)
class DatasetRecord:
    q_0: np.ndarray
    q_t: np.ndarray
    t_blind: float
    t_cf: float
    straight_line_free: bool
    seed: int


def halton_start(seed: int) -> int:
    """Start index of the Halton stream owned by ``seed``; streams are 2**16 points apart."""
    return 1 + (int(seed) % 2 ** 16) * 2 ** 16


def record_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1, np.uint32)[0])


def _record_dtype(n: int) -> np.dtype:
    return np.dtype([("q_0", "<f8", (n,)), ("q_t", "<f8", (n,)), ("t_blind", "<f8"),
                     ("t_cf", "<f8"), ("free", "u1"), ("seed", "<u8")])


def records_to_array(records, n: int) -> np.ndarray:
    arr = np.zeros(len(records), dtype=_record_dtype(n))
    for i, r in enumerate(records):
        arr[i] = (r.q_0, r.q_t, r.t_blind, r.t_cf, int(r.straight_line_free), r.seed)
    return arr


def write_dataset(path, records, n_joints: int | None = None) -> None:
    if n_joints is None:
        if not records:
            raise ContractViolation("n_joints is required for an empty dataset")
        n_joints = len(records[0].q_0)
    arr = records_to_array(records, n_joints)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(DATASET_MAGIC, DATASET_VERSION, n_joints, len(records)))
        fh.write(arr.tobytes())


def read_dataset(path) -> list[DatasetRecord]:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ModelFileError(f"{path}: truncated dataset header")
    magic, version, n, count = _HEADER.unpack_from(data)
    if magic != DATASET_MAGIC:
        raise ModelFileError(f"{path}: not a dataset file")
    if version != DATASET_VERSION:
        raise ModelFileError(f"{path}: unsupported dataset version {version}")
    dt = _record_dtype(n)
    if len(data) != _HEADER.size + count * dt.itemsize:
        raise ModelFileError(f"{path}: size does not match {count} records")
    arr = np.frombuffer(data, dtype=dt, offset=_HEADER.size)
    return [DatasetRecord(row["q_0"].astype(float), row["q_t"].astype(float), float(row["t_blind"]),
                          float(row["t_cf"]), bool(row["free"]), int(row["seed"])) for row in arr]


def export_csv(path, records) -> None:
    n = len(records[0].q_0) if records else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"q0_{i}" for i in range(n)] + [f"qt_{i}" for i in range(n)]
                   + ["t_blind", "t_cf", "straight_line_free", "seed"])
        for r in records:
            w.writerow([repr(float(x)) for x in r.q_0] + [repr(float(x)) for x in r.q_t]
                       + [repr(r.t_blind), repr(r.t_cf), int(r.straight_line_free), r.seed])


def colliding_fraction(records) -> float:
    if not records:
        return 0.0
    return float(np.mean([not r.straight_line_free for r in records]))


def sample_pairs(world: CollisionWorld, count: int, seed: int, max_tries: int | None = None):
    """``count`` pairs of free configurations from a 2n-dimensional Halton stream."""
    sys = world.sys
    n = sys.n_total
    sampler = HaltonSampler(2 * n, halton_start(seed))
    max_tries = max_tries or max(1000, 50 * count)
    out0, outt = [], []
    have = tries = 0
    while have < count:
        if tries >= max_tries:
            raise NoFreeSampleError(f"found {have}/{count} free pairs in {max_tries} tries")
        block = min(max(2 * (count - have), 64), max_tries - tries)
        U = sampler.take(block)
        tries += block
        Q0 = scale_to_limits(sys, U[:, :n])
        Qt = scale_to_limits(sys, U[:, n:])
        ok = ~(world.collisions(Q0) | world.collisions(Qt))
        idx = np.flatnonzero(ok)[: count - have]
        out0.append(Q0[idx])
        outt.append(Qt[idx])
        have += len(idx)
    return np.concatenate(out0), np.concatenate(outt)


def generate_dataset(world: CollisionWorld, count: int, seed: int = 0, *, budget: int = PLAN_BUDGET,
                     threads: int = 1, progress: bool = False) -> list[DatasetRecord]:
    """Sample free pairs and time them with both oracles.

    Pairs whose detour cannot be planned within ``budget`` are replaced by
    fresh samples, so exactly ``count`` records come back.
    """
    if count < 1:
        raise ContractViolation("count must be >= 1")
    sys = world.sys
    records: list[DatasetRecord] = []
    drawn = 0
    dropped = 0
    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    try:
        while len(records) < count:
            need = count - len(records)
            # the stream is re-drawn from its start so replacements stay deterministic
            Q0, Qt = sample_pairs(world, drawn + need, seed)
            Q0, Qt = Q0[drawn:], Qt[drawn:]
            seeds = [record_seed(seed, drawn + i) for i in range(need)]
            drawn += need
            t_blind = synchronized_durations(sys, Q0, Qt)
            free = ~world.segment_collisions(Q0, Qt)

            def time_pair(i):
                if free[i]:
                    return float(t_blind[i])
                try:
                    return plan_collision_free(world, Q0[i], Qt[i], budget, seeds[i]).duration
                except PlanningError:
                    return None

            mapper = pool.map if pool else map
            for i, t_cf in enumerate(mapper(time_pair, range(need))):
                if t_cf is None:
                    dropped += 1
                    continue
                records.append(DatasetRecord(Q0[i].copy(), Qt[i].copy(), float(t_blind[i]), float(t_cf),
                                             bool(free[i]), seeds[i]))
                if progress and len(records) % 1000 == 0:
                    log.info("%d/%d records", len(records), count)
    finally:
        if pool:
            pool.shutdown()
    if dropped:
        log.warning("dropped %d pairs whose planning budget ran out", dropped)
    return records
