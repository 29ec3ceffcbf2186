"""Binary cross-entropy loss, a hand-rolled Adam optimizer, and the
mini-batch training loops (single-size and mixed-size round-robin).

The loss follows the convention of summing over all d^2 matrix entries and
averaging over the batch, so the gradient scale grows with d; the learning
rate is a plain constant on top of that (Adam's normalization makes the
update scale-invariant anyway).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import discover, eqnet
from .eqnet import ArchConfig, EqModel, FcModel, PROB_EPS
from .featurize import Dataset
from .util import sigmoid

MODEL_KINDS = ("eq", "fc")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 200
    patience: int = 20
    seed: int = 0
    arch: ArchConfig = field(default_factory=ArchConfig)
    model: str = "eq"
    hidden: int = 1024
    threshold: float = 0.5

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError(f"learning rate must be > 0, got {self.lr}")
        if self.batch_size < 1:
            raise ValueError(f"batch size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 1 or self.patience < 1:
            raise ValueError("max_epochs and patience must be >= 1")
        if self.model not in MODEL_KINDS:
            raise ValueError(f"model must be one of {MODEL_KINDS}, got {self.model!r}")
        if self.hidden < 1:
            raise ValueError(f"hidden width must be >= 1, got {self.hidden}")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError(f"threshold must be in (0, 1), got {self.threshold}")


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    val_prec: float
    val_recall: float
    val_shd: float


def bce_loss(pred: np.ndarray, label) -> tuple[float, np.ndarray]:
    """Binary cross-entropy summed over matrix entries, averaged over batch.

    pred: (d, d) or (batch, d, d) probabilities strictly inside (0, 1);
    label: matching binary adjacency array (a Dag's adj also works).
    Returns (loss, gradient wrt pred).
    """
    pred = np.asarray(pred, dtype=np.float64)
    y = np.asarray(getattr(label, "adj", label), dtype=np.float64)
    if pred.shape != y.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs label {y.shape}")
    if pred.min() <= 0.0 or pred.max() >= 1.0:
        raise ValueError("predictions must lie strictly inside (0, 1); clamp upstream")
    n = pred.shape[0] if pred.ndim == 3 else 1
    loss = -(y * np.log(pred) + (1.0 - y) * np.log1p(-pred)).sum() / n
    grad = (pred - y) / (pred * (1.0 - pred)) / n
    return float(loss), grad


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_adam(params: list[np.ndarray]) -> AdamState:
    return AdamState(
        m=[np.zeros_like(p) for p in params],
        v=[np.zeros_like(p) for p in params],
    )


def adam_step(
    params: list[np.ndarray], grads: list[np.ndarray], state: AdamState, lr: float
) -> tuple[list[np.ndarray], AdamState]:
    """One bias-corrected Adam update, applied to params in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state must be parallel lists")
    for i, g in enumerate(grads):
        if g.shape != params[i].shape:
            raise ValueError(f"grad {i} shape {g.shape} != param shape {params[i].shape}")
        if not np.isfinite(g).all():
            raise ArithmeticError(f"non-finite gradient in parameter {i}; aborting step")
    state.step += 1
    c1 = 1.0 - state.beta1 ** state.step
    c2 = 1.0 - state.beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


def _stack(examples) -> tuple[np.ndarray, np.ndarray]:
    x = np.stack([ex.feature.rho for ex in examples])
    y = np.stack([ex.label.adj for ex in examples]).astype(np.float64)
    return x, y


def _batch_loss(model, xb: np.ndarray, yb: np.ndarray) -> tuple[float, list[np.ndarray]]:
    """Fused sigmoid+BCE loss and parameter gradients for one mini-batch.

    Returns no gradients when the loss is non-finite so that the caller can
    stop cleanly instead of backpropagating NaNs.
    """
    if isinstance(model, EqModel):
        z, cache = eqnet.model_logits(model, xb)
    else:
        z, cache = eqnet.fc_logits(model, xb)
        yb = yb.reshape(yb.shape[0], -1)
    pred = sigmoid(z)
    p = np.clip(pred, PROB_EPS, 1.0 - PROB_EPS)
    loss = -(yb * np.log(p) + (1.0 - yb) * np.log1p(-p)).sum() / xb.shape[0]
    if not math.isfinite(loss):
        return float(loss), []
    gz = (pred - yb) / xb.shape[0]
    if isinstance(model, EqModel):
        grads = eqnet.model_backward(model, cache, gz)
    else:
        grads = eqnet.fc_backward(model, cache, gz)
    return float(loss), grads


def _dataset_loss(model, x: np.ndarray, y: np.ndarray, batch_size: int) -> float:
    total = 0.0
    for lo in range(0, x.shape[0], batch_size):
        xb, yb = x[lo : lo + batch_size], y[lo : lo + batch_size]
        if isinstance(model, EqModel):
            z, _ = eqnet.model_logits(model, xb)
            yy = yb
        else:
            z, _ = eqnet.fc_logits(model, xb)
            yy = yb.reshape(yb.shape[0], -1)
        p = np.clip(sigmoid(z), PROB_EPS, 1.0 - PROB_EPS)
        total += -(yy * np.log(p) + (1.0 - yy) * np.log1p(-p)).sum()
    return total / x.shape[0]


def _init_model(cfg: TrainConfig, shards: list[Dataset]):
    rng = np.random.default_rng([int(cfg.seed), 0])
    if cfg.model == "eq":
        return eqnet.init_params(cfg.arch, rng)
    sizes = {s.config.d for s in shards}
    if len(sizes) != 1:
        raise ValueError(f"FC model is fixed-size; cannot train across d={sorted(sizes)}")
    return eqnet.init_fc(sizes.pop(), rng, n_layers=cfg.arch.layers, hidden=cfg.hidden)


def fit(shards: list[Dataset], cfg: TrainConfig, model=None, adam: AdamState | None = None):
    """Shared loop behind train and ensemble_train.

    Round-robins mini-batches across shards (a batch never mixes sizes),
    early-stops on validation loss over the pooled test splits, and returns
    the best-validation model. A non-finite training or validation loss ends
    training immediately with the best snapshot so far restored. Passing a
    model (and its optimizer state) resumes instead of starting fresh.
    """
    if not shards:
        raise ValueError("need at least one dataset shard")
    if any(not s.train for s in shards):
        raise ValueError("every shard needs a non-empty train split")
    if model is None:
        model = _init_model(cfg, shards)
    params = eqnet.parameters(model)
    state = adam if adam is not None else init_adam(params)

    train_xy = [_stack(s.train) for s in shards]
    val_examples = [ex for s in shards for ex in s.test]
    val_xy = [_stack(s.test) for s in shards if s.test]
    n_train = sum(x.shape[0] for x, _ in train_xy)

    best = [p.copy() for p in params]
    best_val = math.inf
    stale = 0
    history: list[EpochStats] = []
    for epoch in range(cfg.max_epochs):
        total = 0.0
        diverged = False
        for xb, yb in _epoch_batches(train_xy, cfg, epoch):
            loss, grads = _batch_loss(model, xb, yb)
            if not math.isfinite(loss):
                diverged = True
                break
            adam_step(params, grads, state, cfg.lr)
            total += loss * xb.shape[0]
        if diverged:
            break
        train_loss = total / n_train

        if val_examples:
            val_loss = sum(
                _dataset_loss(model, x, y, cfg.batch_size) * x.shape[0] for x, y in val_xy
            ) / len(val_examples)
            report = discover.evaluate(model, val_examples, threshold=cfg.threshold)
            stats = EpochStats(epoch, train_loss, val_loss, report.precision, report.recall, report.shd)
        else:
            val_loss = math.nan
            stats = EpochStats(epoch, train_loss, val_loss, math.nan, math.nan, math.nan)
        history.append(stats)
        if not val_examples:
            best = [p.copy() for p in params]
            continue
        if not math.isfinite(val_loss):
            break
        if val_loss < best_val:
            best_val = val_loss
            best = [p.copy() for p in params]
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    for p, b in zip(params, best):
        p[...] = b
    return model, history, state


def _epoch_batches(train_xy, cfg: TrainConfig, epoch: int):
    """Deterministically shuffled batches, interleaved round-robin over shards."""
    per_shard = []
    for shard_idx, (x, y) in enumerate(train_xy):
        rng = np.random.default_rng([int(cfg.seed), epoch + 1, shard_idx])
        order = rng.permutation(x.shape[0])
        batches = [
            (x[order[lo : lo + cfg.batch_size]], y[order[lo : lo + cfg.batch_size]])
            for lo in range(0, x.shape[0], cfg.batch_size)
        ]
        per_shard.append(batches)
    for round_idx in range(max(len(b) for b in per_shard)):
        for batches in per_shard:
            if round_idx < len(batches):
                yield batches[round_idx]


def train(dataset: Dataset, config: TrainConfig, model=None, adam: AdamState | None = None):
    """Train on one dataset; returns (model, history of EpochStats)."""
    model, history, _ = fit([dataset], config, model, adam)
    return model, history


def ensemble_train(shards: list[Dataset], config: TrainConfig, model=None, adam: AdamState | None = None):
    """Train one size-agnostic model over several same-featurization shards.

    Batches are drawn within a single shard at a time and interleaved
    round-robin; with a single shard this is exactly train(). Returns
    (model, history).
    """
    model, history, _ = fit(list(shards), config, model, adam)
    return model, history
