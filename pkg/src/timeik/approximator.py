"""Learned execution-time approximator.

A fully connected network maps the positional encoding of a (start, target)
configuration pair to a predicted motion time. Gradients are available with
respect to the target configuration (for the IK optimizer) and with respect
to the weights (for training).
"""

from __future__ import annotations

import hashlib
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ContractViolation, DivergenceError, ModelFileError

log = logging.getLogger(__name__)

MODEL_MAGIC = b"TIKMLP\x00\x00"
MODEL_VERSION = 1
ACTIVATIONS = ("tanh", "softplus", "silu")


# ---------------------------------------------------------------------------
# activations (all C1 or smoother)
# ---------------------------------------------------------------------------

def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _act(name, z):
    if name == "silu":
        return z * _sigmoid(z)
    if name == "tanh":
        return np.tanh(z)
    if name == "softplus":
        return np.logaddexp(0.0, z)
    raise ContractViolation(f"unknown activation {name!r}")


def _act_grad(name, z):
    if name == "silu":
        s = _sigmoid(z)
        return s * (1.0 + z * (1.0 - s))
    if name == "tanh":
        return 1.0 - np.tanh(z) ** 2
    if name == "softplus":
        return _sigmoid(z)
    raise ContractViolation(f"unknown activation {name!r}")


# ---------------------------------------------------------------------------
# encoding
# ---------------------------------------------------------------------------

def encode(q_0, q_t) -> np.ndarray:
    """``[q0, cos q0, sin q0, qt, cos qt, sin qt]`` along the last axis."""
    q_0 = np.asarray(q_0, dtype=float)
    q_t = np.asarray(q_t, dtype=float)
    if q_0.shape != q_t.shape:
        raise ContractViolation(f"q_0 and q_t shapes differ: {q_0.shape} vs {q_t.shape}")
    return np.concatenate([q_0, np.cos(q_0), np.sin(q_0), q_t, np.cos(q_t), np.sin(q_t)], axis=-1)


def default_input_scale(n_joints: int) -> np.ndarray:
    one = np.ones(n_joints)
    return np.concatenate([one / np.pi, one, one] * 2)


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class MlpModel:
    n_joints: int
    layer_sizes: tuple
    weights: list  # W[k] has shape (layer_sizes[k], layer_sizes[k+1])
    biases: list
    activation: str = "silu"
    input_scale: np.ndarray = None
    output_mean: float = 0.0
    output_std: float = 1.0

    def __post_init__(self):
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)
        if self.layer_sizes[0] != 6 * self.n_joints or self.layer_sizes[-1] != 1:
            raise ContractViolation(
                f"layer sizes must run from 6*n_joints={6 * self.n_joints} to 1, got {self.layer_sizes}")
        if self.activation not in ACTIVATIONS:
            raise ContractViolation(f"unknown activation {self.activation!r}")
        if self.input_scale is None:
            self.input_scale = default_input_scale(self.n_joints)
        self.input_scale = np.asarray(self.input_scale, dtype=float)
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (self.layer_sizes[k], self.layer_sizes[k + 1]) or b.shape != (self.layer_sizes[k + 1],):
                raise ContractViolation(f"layer {k} has inconsistent weight shapes")

    @classmethod
    def initialize(cls, n_joints: int, hidden=(256, 256, 128), activation="silu", seed: int = 0,
                   output_mean: float = 0.0, output_std: float = 1.0) -> "MlpModel":
        rng = np.random.default_rng(seed)
        sizes = (6 * n_joints, *hidden, 1)
        weights, biases = [], []
        for k in range(len(sizes) - 1):
            W = rng.normal(0.0, np.sqrt(1.0 / sizes[k]), size=(sizes[k], sizes[k + 1]))
            weights.append(W)
            biases.append(np.zeros(sizes[k + 1]))
        return cls(n_joints, sizes, weights, biases, activation,
                   output_mean=output_mean, output_std=output_std)

    @classmethod
    def zeros_like(cls, other: "MlpModel") -> "MlpModel":
        return cls(other.n_joints, other.layer_sizes, [np.zeros_like(W) for W in other.weights],
                   [np.zeros_like(b) for b in other.biases], other.activation,
                   other.input_scale.copy(), other.output_mean, other.output_std)

    def copy(self) -> "MlpModel":
        return MlpModel(self.n_joints, self.layer_sizes, [W.copy() for W in self.weights],
                        [b.copy() for b in self.biases], self.activation,
                        self.input_scale.copy(), self.output_mean, self.output_std)

    def _check_input(self, X):
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.layer_sizes[0]:
            raise ContractViolation(
                f"encoded input has {X.shape[-1]} entries, model expects {self.layer_sizes[0]}"
                f" ({self.n_joints} joints)")
        return X

    # -- forward / backward ------------------------------------------------

    def _forward(self, X):
        """Normalized output ``(B,)`` and per-layer pre-activations/activations."""
        a = X * self.input_scale
        acts, pre = [a], []
        last = len(self.weights) - 1
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ W + b
            pre.append(z)
            a = z if k == last else _act(self.activation, z)
            acts.append(a)
        return a[:, 0], pre, acts

    def _backward(self, dy, pre, acts, weights_too=True):
        """Backpropagate ``dL/dy`` (B,); returns (dL/dx_scaled, dW list, db list)."""
        g = dy[:, None]
        dW, db = [], []
        last = len(self.weights) - 1
        for k in range(last, -1, -1):
            if k != last:
                g = g * _act_grad(self.activation, pre[k])
            if weights_too:
                dW.append(acts[k].T @ g)
                db.append(g.sum(axis=0))
            g = g @ self.weights[k].T
        return g, dW[::-1], db[::-1]

    def predict_batch(self, X) -> np.ndarray:
        X = np.atleast_2d(self._check_input(X))
        y, _, _ = self._forward(X)
        return self.output_mean + self.output_std * y

    def input_gradient_batch(self, X) -> tuple[np.ndarray, np.ndarray]:
        """Predictions ``(B,)`` and their gradients w.r.t. the raw target configuration ``(B, n)``."""
        X = np.atleast_2d(self._check_input(X))
        y, pre, acts = self._forward(X)
        gx, _, _ = self._backward(np.full(len(X), self.output_std), pre, acts, weights_too=False)
        gx = gx * self.input_scale
        n = self.n_joints
        q_t = X[:, 3 * n:4 * n]
        grad = gx[:, 3 * n:4 * n] - gx[:, 4 * n:5 * n] * np.sin(q_t) + gx[:, 5 * n:6 * n] * np.cos(q_t)
        return self.output_mean + self.output_std * y, grad

    def loss_and_grads(self, X, t, huber_delta: float | None = None):
        """Loss in normalized units and its weight/bias gradients.

        Mean squared error by default. With ``huber_delta`` residuals beyond
        the delta are penalized linearly (scaled so the loss is ``r**2`` near
        zero), which pulls the fit toward the conditional median.
        """
        X = np.atleast_2d(self._check_input(X))
        z = (np.asarray(t, dtype=float) - self.output_mean) / self.output_std
        y, pre, acts = self._forward(X)
        r = y - z
        if huber_delta is None:
            loss = float(np.mean(r * r))
            g = 2.0 * r
        else:
            a = np.abs(r)
            small = a <= huber_delta
            loss = float(np.mean(np.where(small, r * r, 2.0 * huber_delta * a - huber_delta ** 2)))
            g = 2.0 * np.where(small, r, huber_delta * np.sign(r))
        _, dW, db = self._backward(g / len(X), pre, acts)
        return loss, dW, db

    # -- serialization ----------------------------------------------------

    def to_bytes(self) -> bytes:
        head = struct.pack("<8sIII", MODEL_MAGIC, MODEL_VERSION, self.n_joints, len(self.weights))
        head += struct.pack(f"<{len(self.layer_sizes)}I", *self.layer_sizes)
        head += struct.pack("<Idd", ACTIVATIONS.index(self.activation), self.output_mean, self.output_std)
        blocks = [self.input_scale.astype("<f8").tobytes()]
        for W, b in zip(self.weights, self.biases):
            blocks.append(np.ascontiguousarray(W, dtype="<f8").tobytes())
            blocks.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
        return head + b"".join(blocks)

    @classmethod
    def from_bytes(cls, data: bytes) -> "MlpModel":
        try:
            magic, version, n_joints, n_layers = struct.unpack_from("<8sIII", data, 0)
            if magic != MODEL_MAGIC:
                raise ModelFileError("not an approximator model file")
            if version != MODEL_VERSION:
                raise ModelFileError(f"unsupported model file version {version}")
            off = struct.calcsize("<8sIII")
            sizes = struct.unpack_from(f"<{n_layers + 1}I", data, off)
            off += 4 * (n_layers + 1)
            act_id, mean, std = struct.unpack_from("<Idd", data, off)
            off += struct.calcsize("<Idd")

            def take(count):
                nonlocal off
                a = np.frombuffer(data, dtype="<f8", count=count, offset=off).astype(float)
                off += 8 * count
                return a

            scale = take(6 * n_joints)
            weights, biases = [], []
            for k in range(n_layers):
                weights.append(take(sizes[k] * sizes[k + 1]).reshape(sizes[k], sizes[k + 1]))
                biases.append(take(sizes[k + 1]))
        except (struct.error, ValueError) as exc:
            raise ModelFileError(f"truncated or corrupt model file: {exc}") from exc
        if off != len(data):
            raise ModelFileError("trailing bytes in model file")
        return cls(n_joints, sizes, weights, biases, ACTIVATIONS[act_id], scale, mean, std)

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "MlpModel":
        return cls.from_bytes(Path(path).read_bytes())


def predict(model: MlpModel, pair) -> float:
    """Predicted seconds for one encoded pair (not clamped)."""
    return float(model.predict_batch(np.asarray(pair, dtype=float)[None])[0])


def input_gradient(model: MlpModel, pair) -> np.ndarray:
    """d(prediction)/d(q_t) for one encoded pair; ``q_0`` is held constant."""
    return model.input_gradient_batch(np.asarray(pair, dtype=float)[None])[1][0]


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    hidden: tuple = (256, 256, 128)
    activation: str = "silu"
    epochs: int = 45
    batch_size: int = 256
    learning_rate: float = 1e-3
    final_lr_fraction: float = 0.05
    weight_decay: float = 0.0  # decoupled, applied to weight matrices only
    augment_reversed: bool = True  # also train on (q_t, q_0) with the same time
    huber_delta: float | None = 0.1  # z-score units; None trains on plain MSE
    ema_decay: float | None = 0.999  # per-step average of the weights, returned instead of the raw ones
    validation_fraction: float = 0.1


@dataclass
class TrainLog:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    val_mae: list = field(default_factory=list)
    target_mean: float = 0.0
    n_train: int = 0
    n_val: int = 0

    @property
    def final_val_mae(self) -> float:
        return self.val_mae[-1] if self.val_mae else float("nan")

    @property
    def mae_ratio(self) -> float:
        return self.final_val_mae / self.target_mean if self.target_mean else float("nan")


def target_column(records, target: str) -> np.ndarray:
    if target in ("blind", "t_blind"):
        return np.array([r.t_blind for r in records], dtype=float)
    if target in ("cf", "t_cf"):
        return np.array([r.t_cf for r in records], dtype=float)
    raise ContractViolation(f"unknown target {target!r} (expected 'blind' or 'cf')")


def validation_mask(records, fraction: float, seed: int) -> np.ndarray:
    """Deterministic hash split: a record is held out iff its keyed hash falls below ``fraction``."""
    key = seed.to_bytes(8, "little", signed=False)
    out = np.empty(len(records), dtype=bool)
    for i, r in enumerate(records):
        h = hashlib.blake2b(np.concatenate([r.q_0, r.q_t]).astype("<f8").tobytes()
                            + int(r.seed).to_bytes(8, "little"), key=key, digest_size=8)
        out[i] = int.from_bytes(h.digest(), "little") / 2.0 ** 64 < fraction
    return out


def train(records: Sequence, config: TrainConfig | None = None, seed: int = 0,
          target: str = "blind") -> tuple[MlpModel, TrainLog]:
    """Fit an approximator with mini-batch Adam on z-scored times (Huber loss by default)."""
    config = config or TrainConfig()
    if len(records) == 0:
        raise ContractViolation("cannot train on an empty dataset")
    n = len(records[0].q_0)
    X = encode(np.stack([r.q_0 for r in records]), np.stack([r.q_t for r in records]))
    t = target_column(records, target)
    val = validation_mask(records, config.validation_fraction, seed & 0xFFFFFFFFFFFFFFFF)
    if val.all() or not val.any():
        val = np.zeros(len(records), dtype=bool)
    Xtr, ttr = X[~val], t[~val]
    if config.augment_reversed:
        # both oracles time a move and its reverse alike (exactly for the
        # collision-blind one), so swapped training pairs are extra samples
        Q0, Qt = Xtr[:, :3 * n], Xtr[:, 3 * n:]
        Xtr = np.vstack([Xtr, np.hstack([Qt, Q0])])
        ttr = np.concatenate([ttr, ttr])
    Xva, tva = (X[val], t[val]) if val.any() else (Xtr, ttr)
    mean = float(np.mean(ttr))
    std = float(np.std(ttr))
    if std < 1e-9:
        std = 1.0
    model = MlpModel.initialize(n, config.hidden, config.activation, seed, mean, std)
    # start from the mean prediction; hidden layers pick up gradient after one step
    model.weights[-1][:] = 0.0
    log_ = TrainLog(target_mean=float(np.mean(tva)), n_train=int((~val).sum()), n_val=int(val.sum()))

    rng = np.random.default_rng(seed)
    m = [np.zeros_like(W) for W in model.weights] + [np.zeros_like(b) for b in model.biases]
    v = [np.zeros_like(a) for a in m]
    b1, b2, eps = 0.9, 0.999, 1e-8
    step = 0
    params = model.weights + model.biases
    n_w = len(model.weights)
    ema = model.copy() if config.ema_decay else None
    ema_params = ema.weights + ema.biases if ema else []
    for epoch in range(config.epochs):
        frac = epoch / max(config.epochs - 1, 1)
        lr = config.learning_rate * (config.final_lr_fraction
                                     + (1 - config.final_lr_fraction) * 0.5 * (1 + np.cos(np.pi * frac)))
        order = rng.permutation(len(Xtr))
        total = 0.0
        for s in range(0, len(order), config.batch_size):
            idx = order[s:s + config.batch_size]
            with np.errstate(over="ignore", invalid="ignore"):
                loss, dW, db = model.loss_and_grads(Xtr[idx], ttr[idx], config.huber_delta)
            if not np.isfinite(loss):
                raise DivergenceError(epoch)
            total += loss * len(idx)
            step += 1
            for k, (p, g, mi, vi) in enumerate(zip(params, dW + db, m, v)):
                if k < n_w and config.weight_decay:
                    p *= 1.0 - lr * config.weight_decay
                mi *= b1
                mi += (1 - b1) * g
                vi *= b2
                vi += (1 - b2) * g * g
                p -= lr * (mi / (1 - b1 ** step)) / (np.sqrt(vi / (1 - b2 ** step)) + eps)
            if ema:
                # warm-up keeps early averages from clinging to the initial weights
                d = min(config.ema_decay, (1 + step) / (10 + step))
                for pe, p in zip(ema_params, params):
                    pe *= d
                    pe += (1 - d) * p
        train_loss = total / len(Xtr)
        with np.errstate(over="ignore", invalid="ignore"):
            pred = (ema or model).predict_batch(Xva)
            val_loss = float(np.mean(((pred - tva) / std) ** 2))
        if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
            raise DivergenceError(epoch)
        log_.train_loss.append(train_loss)
        log_.val_loss.append(val_loss)
        log_.val_mae.append(float(np.mean(np.abs(pred - tva))))
        log.info("epoch %d: train %.5f val %.5f mae %.4f s", epoch, train_loss, val_loss, log_.val_mae[-1])
    return (ema or model), log_


def weight_gradient_check(model: MlpModel, record, n_checks: int = 20, seed: int = 0,
                          eps: float = 1e-6, target: str = "blind") -> float:
    """Largest relative error between analytic and central-difference weight gradients."""
    X = encode(record.q_0, record.q_t)[None]
    t = target_column([record], target)
    _, dW, db = model.loss_and_grads(X, t)
    analytic = dW + db
    params = model.weights + model.biases
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_checks):
        k = int(rng.integers(len(params)))
        idx = tuple(int(rng.integers(s)) for s in params[k].shape)
        old = params[k][idx]
        params[k][idx] = old + eps
        lp, _, _ = model.loss_and_grads(X, t)
        params[k][idx] = old - eps
        lm, _, _ = model.loss_and_grads(X, t)
        params[k][idx] = old
        fd = (lp - lm) / (2 * eps)
        a = analytic[k][idx]
        scale = max(abs(a), abs(fd), 1e-7)
        worst = max(worst, abs(a - fd) / scale)
    return worst
