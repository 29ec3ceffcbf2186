"""Permutation-equivariant matrix layers with exact forward/backward, the
stacked edge-probability model built from them, and the fully-connected
baseline.

A layer maps a stack of c_in matrices to c_out matrices. Per output channel
o the response is

    Y_o = sum_i [ w1[o,i] * X_i
                + w2[o,i] * pool_rows(X_i)     # column sums, broadcast down rows
                + w3[o,i] * pool_cols(X_i)     # row sums, broadcast across columns
                + w4[o,i] * pool_all(X_i) ]    # grand sum, broadcast everywhere
          + b[o]

Each pooling operator commutes with simultaneous row/column permutation, so
stacks of these layers are exactly permutation equivariant and accept any
matrix size d with unchanged parameters. In "mean" pooling mode the three
pools are divided by d, d, and d^2 respectively, which keeps activation
scales comparable across different d; "sum" mode applies no normalization.

All tensors are float64. Batched shapes are (batch, channels, d, d).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .util import sigmoid

POOLING_MODES = ("mean", "sum")

# sigmoid outputs are clamped into [PROB_EPS, 1 - PROB_EPS] to keep log() finite
PROB_EPS = 1e-7


@dataclass
class EqLayerParams:
    """Weights of one exchangeable matrix layer; each w has shape (c_out, c_in)."""

    w1: np.ndarray
    w2: np.ndarray
    w3: np.ndarray
    w4: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        shape = self.w1.shape
        if any(w.shape != shape for w in (self.w2, self.w3, self.w4)):
            raise ValueError("w1..w4 must share one (c_out, c_in) shape")
        if self.b.shape != (shape[0],):
            raise ValueError(f"bias shape {self.b.shape} does not match c_out={shape[0]}")
        for w in (self.w1, self.w2, self.w3, self.w4, self.b):
            if not np.isfinite(w).all():
                raise ValueError("layer parameters must be finite")

    @property
    def c_out(self) -> int:
        return self.w1.shape[0]

    @property
    def c_in(self) -> int:
        return self.w1.shape[1]


@dataclass
class EqModel:
    """Stack of exchangeable layers: leaky-ReLU between layers, sigmoid output.

    First layer has c_in=1, last has c_out=1. Works at any d.
    """

    layers: list[EqLayerParams]
    alpha: float = 0.01
    pooling: str = "mean"

    def __post_init__(self):
        if not self.layers:
            raise ValueError("model needs at least one layer")
        if self.layers[0].c_in != 1 or self.layers[-1].c_out != 1:
            raise ValueError("model must map 1 input channel to 1 output channel")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.c_out != nxt.c_in:
                raise ValueError(f"channel mismatch: {prev.c_out} -> {nxt.c_in}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"leaky-ReLU slope must be in (0, 1), got {self.alpha}")
        if self.pooling not in POOLING_MODES:
            raise ValueError(f"pooling must be one of {POOLING_MODES}, got {self.pooling!r}")


@dataclass(frozen=True)
class ArchConfig:
    """Architecture knobs for init_params."""

    layers: int = 6
    channels: int = 300
    alpha: float = 0.01
    pooling: str = "mean"

    def __post_init__(self):
        if self.layers < 1:
            raise ValueError(f"layer count must be >= 1, got {self.layers}")
        if self.channels < 1:
            raise ValueError(f"channel count must be >= 1, got {self.channels}")


def _norms(d: int, pooling: str) -> tuple[float, float, float]:
    if pooling == "mean":
        return 1.0 / d, 1.0 / d, 1.0 / (d * d)
    if pooling == "sum":
        return 1.0, 1.0, 1.0
    raise ValueError(f"pooling must be one of {POOLING_MODES}, got {pooling!r}")


def _mix(w: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Channel mix: (c_out, c_in) x (B, c_in, j, k) -> (B, c_out, j, k)."""
    batch, _, j, k = t.shape
    out = np.matmul(w, t.reshape(batch, t.shape[1], j * k))
    return out.reshape(batch, w.shape[0], j, k)


def _outer(g: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Weight gradient: sum_b,m g[b,o,m] * t[b,i,m] -> (c_out, c_in)."""
    batch = g.shape[0]
    g2 = g.reshape(batch, g.shape[1], -1)
    t2 = t.reshape(batch, t.shape[1], -1)
    return np.matmul(g2, t2.transpose(0, 2, 1)).sum(axis=0)


def _as_batched(x: np.ndarray, name: str) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        return x[None], True
    if x.ndim != 4:
        raise ValueError(f"{name} must have shape (c, d, d) or (batch, c, d, d), got {x.shape}")
    return x, False

def _apply(params: EqLayerParams, x: np.ndarray, pooling: str) -> np.ndarray:
    """Batched layer response, no activation. x: (B, c_in, d, d)."""
    d = x.shape[-1]
    nr, nc, na = _norms(d, pooling)
    rows = x.sum(axis=-2, keepdims=True) * nr
    cols = x.sum(axis=-1, keepdims=True) * nc
    grand = x.sum(axis=(-2, -1), keepdims=True) * na
    y = (
        _mix(params.w1, x)
        + _mix(params.w2, rows)
        + _mix(params.w3, cols)
        + _mix(params.w4, grand)
    )
    return y + params.b[:, None, None]


def eq_layer_forward(x: np.ndarray, params: EqLayerParams, pooling: str = "mean") -> np.ndarray:
    """One exchangeable layer, no activation. Accepts (c_in, d, d) or batched."""
    x, squeezed = _as_batched(x, "x")
    if x.shape[-1] != x.shape[-2]:
        raise ValueError(f"input matrices must be square, got {x.shape}")
    if x.shape[1] != params.c_in:
        raise ValueError(f"input has {x.shape[1]} channels, layer expects {params.c_in}")
    y = _apply(params, x, pooling)
    return y[0] if squeezed else y


def eq_layer_backward(
    grad_y: np.ndarray, x: np.ndarray, params: EqLayerParams, pooling: str = "mean"
) -> tuple[np.ndarray, EqLayerParams]:
    """Exact gradients for eq_layer_forward.

    Returns (grad wrt x, parameter gradients packed as an EqLayerParams).
    Each pooling term's input gradient is the same pooling (with the same
    normalization) applied to grad_y, mixed through the transposed weights.
    """
    grad_y, squeezed = _as_batched(grad_y, "grad_y")
    x, _ = _as_batched(x, "x")
    if x.shape[1] != params.c_in or grad_y.shape[1] != params.c_out:
        raise ValueError(
            f"channels ({x.shape[1]} in, {grad_y.shape[1]} out) do not match layer "
            f"({params.c_in} in, {params.c_out} out)"
        )
    if grad_y.shape[0] != x.shape[0] or grad_y.shape[-2:] != x.shape[-2:]:
        raise ValueError(f"grad_y shape {grad_y.shape} does not match input {x.shape}")
    d = x.shape[-1]
    nr, nc, na = _norms(d, pooling)
    x_rows = x.sum(axis=-2, keepdims=True) * nr
    x_cols = x.sum(axis=-1, keepdims=True) * nc
    x_grand = x.sum(axis=(-2, -1), keepdims=True) * na
    g_rows = grad_y.sum(axis=-2, keepdims=True)
    g_cols = grad_y.sum(axis=-1, keepdims=True)
    g_grand = grad_y.sum(axis=(-2, -1), keepdims=True)

    grads = EqLayerParams(
        w1=_outer(grad_y, x),
        w2=_outer(g_rows, x_rows),
        w3=_outer(g_cols, x_cols),
        w4=_outer(g_grand, x_grand),
        b=grad_y.sum(axis=(0, 2, 3)),
    )
    grad_x = (
        _mix(params.w1.T, grad_y)
        + _mix(params.w2.T, g_rows * nr)
        + _mix(params.w3.T, g_cols * nc)
        + _mix(params.w4.T, g_grand * na)
    )
    return (grad_x[0] if squeezed else grad_x), grads


def init_params(arch: ArchConfig, rng: np.random.Generator) -> EqModel:
    """Fresh model: weights ~ Normal(0, 1/sqrt(4 c_in)), biases zero."""
    dims = [1] + [arch.channels] * (arch.layers - 1) + [1]
    layers = []
    for c_in, c_out in zip(dims[:-1], dims[1:]):
        scale = 1.0 / np.sqrt(4.0 * c_in)
        layers.append(
            EqLayerParams(
                w1=rng.normal(0.0, scale, (c_out, c_in)),
                w2=rng.normal(0.0, scale, (c_out, c_in)),
                w3=rng.normal(0.0, scale, (c_out, c_in)),
                w4=rng.normal(0.0, scale, (c_out, c_in)),
                b=np.zeros(c_out),
            )
        )
    return EqModel(layers, alpha=arch.alpha, pooling=arch.pooling)


def _leaky(z: np.ndarray, alpha: float) -> np.ndarray:
    return np.where(z > 0, z, alpha * z)


def _run_layers(model: EqModel, x: np.ndarray, keep_cache: bool):
    cache = []
    z = x
    last = len(model.layers) - 1
    for idx, layer in enumerate(model.layers):
        z = _apply(layer, x, model.pooling)
        if keep_cache:
            cache.append((x, z))
        if idx < last:
            x = _leaky(z, model.alpha)
    return z, cache


def model_forward(feature, model: EqModel) -> np.ndarray:
    """Edge-probability matrix for one correlation feature (any d >= 1).

    Accepts a CorrelationFeature or a bare (d, d) array. Entries are sigmoid
    outputs clamped into [PROB_EPS, 1 - PROB_EPS].
    """
    rho = np.asarray(getattr(feature, "rho", feature), dtype=np.float64)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"feature must be a square matrix, got shape {rho.shape}")
    z, _ = _run_layers(model, rho[None, None], keep_cache=False)
    return np.clip(sigmoid(z[0, 0]), PROB_EPS, 1.0 - PROB_EPS)


def model_logits(model: EqModel, batch: np.ndarray) -> tuple[np.ndarray, list]:
    """Pre-sigmoid outputs for a (B, d, d) batch, with the caches backward needs."""
    batch = np.asarray(batch, dtype=np.float64)
    z, cache = _run_layers(model, batch[:, None], keep_cache=True)
    return z[:, 0], cache


def model_backward(model: EqModel, cache: list, grad_z: np.ndarray) -> list[np.ndarray]:
    """Parameter gradients from the gradient wrt the final pre-sigmoid output.

    Returns arrays aligned with parameters(model).
    """
    g = np.asarray(grad_z, dtype=np.float64)[:, None]
    per_layer: list[EqLayerParams] = [None] * len(model.layers)
    for idx in range(len(model.layers) - 1, -1, -1):
        x_in, _ = cache[idx]
        grad_x, grads = eq_layer_backward(g, x_in, model.layers[idx], model.pooling)
        per_layer[idx] = grads
        if idx > 0:
            _, z_prev = cache[idx - 1]
            g = grad_x * np.where(z_prev > 0, 1.0, model.alpha)
    return [a for grads in per_layer for a in (grads.w1, grads.w2, grads.w3, grads.w4, grads.b)]


# ---------------------------------------------------------------------------
# fully-connected baseline (fixed input size d*d, not size-transferable)
# ---------------------------------------------------------------------------


@dataclass
class FcModel:
    """Plain MLP over the flattened d*d correlation matrix; ReLU between layers."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    d: int

    def __post_init__(self):
        if not self.weights or len(self.weights) != len(self.biases):
            raise ValueError("weights and biases must be non-empty and parallel")
        if self.weights[0].shape[1] != self.d * self.d or self.weights[-1].shape[0] != self.d * self.d:
            raise ValueError("first/last layer sizes must equal d*d")


def init_fc(d: int, rng: np.random.Generator, n_layers: int = 6, hidden: int = 1024) -> FcModel:
    """He-initialized MLP: d^2 -> hidden x (n_layers - 1) -> d^2."""
    if n_layers < 1 or hidden < 1 or d < 1:
        raise ValueError("n_layers, hidden and d must all be >= 1")
    sizes = [d * d] + [hidden] * (n_layers - 1) + [d * d]
    weights = [
        rng.normal(0.0, np.sqrt(2.0 / fan_in), (fan_out, fan_in))
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:])
    ]
    biases = [np.zeros(fan_out) for fan_out in sizes[1:]]
    return FcModel(weights, biases, d)


def fc_forward(feature, model: FcModel) -> np.ndarray:
    """Edge probabilities from the FC baseline; errors on any other d."""
    rho = np.asarray(getattr(feature, "rho", feature), dtype=np.float64)
    if rho.shape != (model.d, model.d):
        raise ValueError(f"FC model is fixed to d={model.d}, got input shape {rho.shape}")
    z, _ = fc_logits(model, rho[None])
    return np.clip(sigmoid(z[0]).reshape(model.d, model.d), PROB_EPS, 1.0 - PROB_EPS)


def fc_logits(model: FcModel, batch: np.ndarray) -> tuple[np.ndarray, list]:
    """Pre-sigmoid outputs (B, d*d) for a (B, d, d) batch, plus backward cache."""
    batch = np.asarray(batch, dtype=np.float64)
    x = batch.reshape(batch.shape[0], -1)
    cache = []
    last = len(model.weights) - 1
    for idx, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = x @ w.T + b
        cache.append((x, z))
        if idx < last:
            x = np.maximum(z, 0.0)
    return z, cache


def fc_backward(model: FcModel, cache: list, grad_z: np.ndarray) -> list[np.ndarray]:
    """Gradients aligned with parameters(model) from grad wrt final logits."""
    g = np.asarray(grad_z, dtype=np.float64)
    out: list[np.ndarray] = [None] * (2 * len(model.weights))
    for idx in range(len(model.weights) - 1, -1, -1):
        x_in, _ = cache[idx]
        out[2 * idx] = g.T @ x_in
        out[2 * idx + 1] = g.sum(axis=0)
        if idx > 0:
            _, z_prev = cache[idx - 1]
            g = (g @ model.weights[idx]) * (z_prev > 0)
    return out


def parameters(model) -> list[np.ndarray]:
    """Live references to all trainable arrays, in serialization order."""
    if isinstance(model, EqModel):
        return [a for l in model.layers for a in (l.w1, l.w2, l.w3, l.w4, l.b)]
    if isinstance(model, FcModel):
        return [a for pair in zip(model.weights, model.biases) for a in pair]
    raise TypeError(f"unsupported model type {type(model).__name__}")


def num_params(model) -> int:
    return sum(p.size for p in parameters(model))
