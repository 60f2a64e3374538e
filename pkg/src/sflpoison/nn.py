"""Minimal neural-network engine with manual forward/backward passes.

Tensors are plain numpy arrays (row-major float buffers). Supported layers:
fully connected (Dense), 1-D convolution (Conv1D, stride 1, no padding) and
1-D max pooling (MaxPool1D). ReLU is attached to Dense/Conv1D as an optional
activation; the softmax lives in the cross-entropy loss. Everything is a
deterministic function of its inputs, so identical calls give bitwise
identical results.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from typing import Sequence

import numpy as np

GLOROT_GAIN = 6.0


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int,
                   dtype=np.float64) -> np.ndarray:
    """Uniform init in +-sqrt(6/(fan_in+fan_out)), drawn from a seeded rng."""
    limit = np.sqrt(GLOROT_GAIN / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def _relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, z.dtype.type(0))


class Dense:
    """Fully connected layer: y = act(x @ W + b).

    Weights have shape [in_features, out_features], bias [out_features].
    Inputs with more than two dimensions are flattened to [B, -1] on the way
    in and the input gradient is reshaped back on the way out.
    """

    kind = "dense"

    def __init__(self, in_features: int, out_features: int, activation: str | None = None,
                 *, rng: np.random.Generator | None = None, dtype=np.float64):
        if activation not in (None, "relu"):
            raise ValueError(f"unsupported activation {activation!r}")
        if rng is None:
            rng = np.random.default_rng(0)
        self.in_features = in_features
        self.out_features = out_features
        self.activation = activation
        self.weights = glorot_uniform(rng, (in_features, out_features),
                                      in_features, out_features, dtype)
        self.biases = np.zeros(out_features, dtype=dtype)

    def param_arrays(self) -> tuple[np.ndarray, ...]:
        return (self.weights, self.biases)

    def param_names(self) -> tuple[str, ...]:
        return ("weights", "biases")

    def forward(self, x: np.ndarray):
        orig_shape = x.shape
        x2 = x.reshape(orig_shape[0], -1) if x.ndim != 2 else x
        if x2.shape[1] != self.in_features:
            raise ValueError(
                f"dense layer expects {self.in_features} input features, "
                f"got {x2.shape[1]} (batch shape {orig_shape})")
        z = x2 @ self.weights + self.biases
        if self.activation == "relu":
            y = _relu(z)
            return y, (x2, orig_shape, z > 0)
        return z, (x2, orig_shape, None)

    def backward(self, cache, grad_out: np.ndarray):
        x2, orig_shape, relu_mask = cache
        g = grad_out * relu_mask if relu_mask is not None else grad_out
        grad_w = x2.T @ g
        grad_b = g.sum(axis=0)
        grad_in = (g @ self.weights.T).reshape(orig_shape)
        return grad_in, (grad_w, grad_b)


class Conv1D:
    """1-D convolution, stride 1, valid padding: y[b,f,l] = sum w[f,c,k] x[b,c,l+k] + b[f].

    Weights have shape [out_channels, in_channels, kernel_width]. Implemented
    as an im2col matmul so the heavy lifting stays in BLAS.
    """

    kind = "conv1d"

    def __init__(self, in_channels: int, out_channels: int, kernel_width: int,
                 activation: str | None = None, *,
                 rng: np.random.Generator | None = None, dtype=np.float64):
        if activation not in (None, "relu"):
            raise ValueError(f"unsupported activation {activation!r}")
        if rng is None:
            rng = np.random.default_rng(0)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_width = kernel_width
        self.activation = activation
        fan_in = in_channels * kernel_width
        fan_out = out_channels * kernel_width
        self.weights = glorot_uniform(rng, (out_channels, in_channels, kernel_width),
                                      fan_in, fan_out, dtype)
        self.biases = np.zeros(out_channels, dtype=dtype)

    def param_arrays(self) -> tuple[np.ndarray, ...]:
        return (self.weights, self.biases)

    def param_names(self) -> tuple[str, ...]:
        return ("weights", "biases")

    def forward(self, x: np.ndarray):
        if x.ndim != 3:
            raise ValueError(f"conv1d expects input [B, channels, length], got shape {x.shape}")
        batch, channels, length = x.shape
        if channels != self.in_channels:
            raise ValueError(f"conv1d expects {self.in_channels} input channels, got {channels}")
        out_len = length - self.kernel_width + 1
        if out_len < 1:
            raise ValueError(
                f"conv1d kernel width {self.kernel_width} exceeds input length {length}")
        win = np.lib.stride_tricks.sliding_window_view(x, self.kernel_width, axis=2)
        cols = win.transpose(0, 2, 1, 3).reshape(batch, out_len, channels * self.kernel_width)
        w2 = self.weights.reshape(self.out_channels, -1)
        z = (cols @ w2.T + self.biases).transpose(0, 2, 1)  # [B, out_channels, out_len]
        if self.activation == "relu":
            return _relu(z), (cols, x.shape, z > 0)
        return z, (cols, x.shape, None)

    def backward(self, cache, grad_out: np.ndarray):
        cols, in_shape, relu_mask = cache
        batch, _, length = in_shape
        out_len = cols.shape[1]
        g = grad_out * relu_mask if relu_mask is not None else grad_out
        g2 = g.transpose(0, 2, 1).reshape(batch * out_len, self.out_channels)
        grad_w = (g2.T @ cols.reshape(batch * out_len, -1)).reshape(self.weights.shape)
        grad_b = g.sum(axis=(0, 2))
        grad_cols = (g2 @ self.weights.reshape(self.out_channels, -1))
        grad_cols = grad_cols.reshape(batch, out_len, self.in_channels, self.kernel_width)
        grad_cols = grad_cols.transpose(0, 2, 1, 3)  # [B, C, out_len, K]
        grad_in = np.zeros(in_shape, dtype=grad_out.dtype)
        for k in range(self.kernel_width):
            grad_in[:, :, k:k + out_len] += grad_cols[:, :, :, k]
        return grad_in, (grad_w, grad_b)


class MaxPool1D:
    """1-D max pooling. Backward routes each gradient to the first max position."""

    kind = "maxpool1d"

    def __init__(self, kernel: int = 2, stride: int = 2):
        self.kernel = kernel
        self.stride = stride

    def param_arrays(self) -> tuple[np.ndarray, ...]:
        return ()

    def param_names(self) -> tuple[str, ...]:
        return ()

    def forward(self, x: np.ndarray):
        if x.ndim != 3:
            raise ValueError(f"maxpool1d expects input [B, channels, length], got shape {x.shape}")
        length = x.shape[2]
        if length < self.kernel:
            raise ValueError(f"maxpool1d kernel {self.kernel} exceeds input length {length}")
        win = np.lib.stride_tricks.sliding_window_view(x, self.kernel, axis=2)[:, :, ::self.stride]
        idx = win.argmax(axis=3)
        y = np.take_along_axis(win, idx[..., None], axis=3)[..., 0]
        return y, (idx, x.shape)

    def backward(self, cache, grad_out: np.ndarray):
        idx, in_shape = cache
        batch, channels, _ = in_shape
        out_len = idx.shape[2]
        grad_in = np.zeros(in_shape, dtype=grad_out.dtype)
        b_ix = np.arange(batch)[:, None, None]
        c_ix = np.arange(channels)[None, :, None]
        l_ix = np.arange(out_len)[None, None, :] * self.stride + idx
        np.add.at(grad_in, (b_ix, c_ix, l_ix), grad_out)
        return grad_in, ()


Layer = Dense | Conv1D | MaxPool1D


@dataclass
class ForwardCache:
    """Per-layer intermediates recorded by forward() for the matching backward()."""

    layer_ids: tuple[int, ...]
    input_shape: tuple[int, ...]
    output_shape: tuple[int, ...]
    items: list

    def matches(self, segment: Sequence[Layer]) -> bool:
        return self.layer_ids == tuple(id(layer) for layer in segment)


def forward(segment: Sequence[Layer], batch: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Run every layer in order; returns the output and the backprop cache.

    An empty segment is the identity. An empty batch is rejected since no
    layer semantics are defined for it.
    """
    x = np.asarray(batch)
    if x.shape[0] == 0:
        raise ValueError("empty batch")
    items = []
    for i, layer in enumerate(segment):
        try:
            x, item = layer.forward(x)
        except ValueError as err:
            raise ValueError(f"layer {i} ({layer.kind}): {err}") from None
        items.append(item)
    return x, ForwardCache(tuple(id(l) for l in segment), np.asarray(batch).shape, x.shape, items)


def backward(segment: Sequence[Layer], cache: ForwardCache,
             upstream_grad: np.ndarray) -> tuple[list[tuple[np.ndarray, ...]], np.ndarray]:
    """Backpropagate upstream_grad through the segment.

    Returns per-layer parameter gradients (forward order, shapes mirroring
    each layer's param_arrays) and the gradient with respect to the segment
    input. The cache must come from a forward() call on this same segment.
    """
    if not cache.matches(segment):
        raise ValueError("cache does not match segment (stale or foreign cache)")
    if tuple(upstream_grad.shape) != tuple(cache.output_shape):
        raise ValueError(
            f"upstream gradient shape {upstream_grad.shape} does not match "
            f"forward output shape {cache.output_shape}")
    grads: list[tuple[np.ndarray, ...]] = [() for _ in segment]
    g = upstream_grad
    for i in range(len(segment) - 1, -1, -1):
        g, grads[i] = segment[i].backward(cache.items[i], g)
    return grads, g


def softmax_cross_entropy(logits: np.ndarray, labels) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy over the batch, with the gradient at the logits.

    Uses the log-sum-exp shift for stability. grad rows are (softmax - onehot)/B,
    so each row sums to zero.
    """
    logits = np.asarray(logits)
    if logits.ndim != 2:
        raise ValueError(f"logits must be [B, classes], got shape {logits.shape}")
    labels = np.asarray(labels)
    batch, num_classes = logits.shape
    if labels.shape != (batch,):
        raise ValueError(f"expected {batch} labels, got shape {labels.shape}")
    if not np.issubdtype(labels.dtype, np.integer):
        raise ValueError("labels must be integers")
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ValueError(f"labels must lie in [0, {num_classes}), got range "
                         f"[{labels.min()}, {labels.max()}]")
    shift = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shift)
    total = exp.sum(axis=1, keepdims=True)
    log_probs = shift - np.log(total)
    rows = np.arange(batch)
    loss = float(-log_probs[rows, labels].mean())
    grad = exp / total
    grad[rows, labels] -= 1
    grad /= batch
    return loss, grad


def sgd_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], lr: float,
             names: Sequence[str] | None = None) -> Sequence[np.ndarray]:
    """In-place update params[i] -= lr * grads[i]; returns params.

    The learning rate is cast to each parameter's dtype so float32 training
    never silently promotes. Non-finite gradients are rejected with the
    offending parameter named.
    """
    if lr < 0:
        raise ValueError(f"learning rate must be non-negative, got {lr}")
    if len(params) != len(grads):
        raise ValueError(f"{len(params)} params but {len(grads)} grads")
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise ValueError(f"grad shape {g.shape} does not mirror param shape {p.shape}")
        if not np.isfinite(g).all():
            label = names[i] if names is not None else f"param {i}"
            raise ValueError(f"non-finite gradient in {label}")
        p -= p.dtype.type(lr) * g
    return params


def segment_param_names(segment: Sequence[Layer]) -> list[str]:
    return [f"{layer.kind}[{i}].{name}"
            for i, layer in enumerate(segment)
            for name in layer.param_names()]


def flatten_grads(param_grads: Sequence[tuple[np.ndarray, ...]]) -> list[np.ndarray]:
    return [g for per_layer in param_grads for g in per_layer]


def apply_gradients(segment: Sequence[Layer], param_grads, lr: float) -> None:
    """One SGD step over every parameter of the segment."""
    params = [p for layer in segment for p in layer.param_arrays()]
    sgd_step(params, flatten_grads(param_grads), lr, names=segment_param_names(segment))


def copy_segment_layers(segment: Sequence[Layer]) -> list[Layer]:
    return [copy.deepcopy(layer) for layer in segment]


def _loss_of(segment: Sequence[Layer], batch: np.ndarray, labels) -> float:
    out, _ = forward(segment, batch)
    return softmax_cross_entropy(out, labels)[0]


def numeric_param_grads(segment: Sequence[Layer], batch: np.ndarray, labels,
                        eps: float = 1e-5) -> list[tuple[np.ndarray, ...]]:
    """Central-difference gradients of the cross-entropy loss for every parameter."""
    grads = []
    for layer in segment:
        per_layer = []
        for p in layer.param_arrays():
            g = np.zeros_like(p, dtype=np.float64)
            flat = p.reshape(-1)
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + eps
                up = _loss_of(segment, batch, labels)
                flat[j] = orig - eps
                down = _loss_of(segment, batch, labels)
                flat[j] = orig
                g.reshape(-1)[j] = (up - down) / (2 * eps)
            per_layer.append(g)
        grads.append(tuple(per_layer))
    return grads


def max_relative_error(analytic, numeric) -> float:
    """max over all entries of |a - n| / max(|a|, |n|, 1e-8)."""
    worst = 0.0
    for la, ln in zip(analytic, numeric):
        for a, n in zip(la, ln):
            denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
            err = np.abs(a - n) / denom
            if err.size:
                worst = max(worst, float(err.max()))
    return worst


def grad_check(segment: Sequence[Layer], batch: np.ndarray, labels,
               eps: float = 1e-5) -> float:
    """Compare analytic backprop to central finite differences.

    Meant for 64-bit parameters; float32 roundoff would dominate the result.
    """
    out, cache = forward(segment, batch)
    _, grad_logits = softmax_cross_entropy(out, labels)
    analytic, _ = backward(segment, cache, grad_logits)
    numeric = numeric_param_grads(segment, batch, labels, eps)
    return max_relative_error(analytic, numeric)
