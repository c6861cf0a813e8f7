"""Layer kernels with hand-written backward passes."""

from __future__ import annotations

from contextlib import contextmanager
from typing import Iterator, Literal

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from src.nn.tensor import NotCalibratedError, ShapeError, Tensor, as_tensor, make_node

BN_EPS = 1e-5
BN_MOMENTUM = 0.1

# Signatures of piecewise-linear branch choices (relu masks, pool argmaxes)
# made during forward passes; populated only inside kink_trace().
_kink_log: list[int] | None = None


@contextmanager
def kink_trace() -> Iterator[list[int]]:
    """Collect a hash of every relu/maxpool branch pattern chosen while active."""
    global _kink_log
    previous = _kink_log
    _kink_log = []
    try:
        yield _kink_log
    finally:
        _kink_log = previous


def _record_kink(pattern: np.ndarray) -> None:
    if _kink_log is not None:
        _kink_log.append(hash(np.ascontiguousarray(pattern).tobytes()))


# ---- activations -------------------------------------------------------------


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    _record_kink(mask)
    return make_node(np.where(mask, x.data, 0).astype(x.dtype), (x,), lambda g: (g * mask,))


def dropout(x: Tensor, p: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout: zero with probability ``p`` and rescale survivors."""
    if not training or p == 0.0:
        return x
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout p must lie in [0, 1), got {p}")
    if rng is None:
        raise ValueError("dropout in train mode needs a generator")
    keep = (rng.random(x.shape) >= p).astype(x.dtype) / x.dtype.type(1.0 - p)
    return make_node(x.data * keep, (x,), lambda g: (g * keep,))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g: np.ndarray):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return make_node(out, (x,), backward)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))

    def backward(g: np.ndarray):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return make_node(out, (x,), backward)


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under ``softmax(logits)``."""
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(f"logits {logits.shape} vs labels {labels.shape}")
    n, classes = logits.shape
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise ValueError(f"labels outside [0, {classes})")

    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    rows = np.arange(n)
    loss = -log_probs[rows, labels].mean()

    def backward(g: np.ndarray):
        grad = np.exp(log_probs)
        grad[rows, labels] -= 1.0
        return (grad * (g / n),)

    return make_node(np.asarray(loss, dtype=logits.dtype), (logits,), backward)


# ---- dense -------------------------------------------------------------------


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight.T + bias`` over any number of leading dimensions."""
    if x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"linear input {x.shape} vs weight {weight.shape}")
    out = x.data @ weight.data.T
    if bias is not None:
        out = out + bias.data

    def backward(g: np.ndarray):
        flat_g = g.reshape(-1, g.shape[-1])
        flat_x = x.data.reshape(-1, x.shape[-1])
        grads = [g @ weight.data, flat_g.T @ flat_x]
        if bias is not None:
            grads.append(flat_g.sum(axis=0))
        return grads

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_node(out, parents, backward)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = BN_EPS) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv_std
    width = x.shape[-1]

    def backward(g: np.ndarray):
        dxhat = g * gamma.data
        dx = inv_std / width * (
            width * dxhat
            - dxhat.sum(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
        )
        flat_g = g.reshape(-1, width)
        return dx, (flat_g * xhat.reshape(-1, width)).sum(axis=0), flat_g.sum(axis=0)

    return make_node((xhat * gamma.data + beta.data).astype(x.dtype), (x, gamma, beta), backward)


# ---- batch normalization -----------------------------------------------------


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    calibrated: bool = True,
    momentum: float = BN_MOMENTUM,
    eps: float = BN_EPS,
) -> Tensor:
    """Per-channel normalization over every axis except axis 1.

    In train mode the running statistics are updated in place (unbiased
    variance, exponential momentum). Eval mode uses them and refuses to run
    if they were never set.
    """
    axes = tuple(i for i in range(x.ndim) if i != 1)
    view = [1] * x.ndim
    view[1] = x.shape[1]
    g_shape = tuple(view)

    if training:
        count = x.data.size // x.shape[1]
        if count <= 1:
            raise ShapeError(f"batch norm needs more than one value per channel, got {x.shape}")
        mu = x.data.mean(axis=axes, keepdims=True)
        var = x.data.var(axis=axes, keepdims=True)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu.reshape(-1)
        running_var *= 1.0 - momentum
        running_var += momentum * var.reshape(-1) * count / (count - 1)
    else:
        if not calibrated:
            raise NotCalibratedError("batch norm evaluated before any training step")
        mu = running_mean.reshape(g_shape)
        var = running_var.reshape(g_shape)

    inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    xhat = (x.data - mu) * inv_std
    out = xhat * gamma.data.reshape(g_shape) + beta.data.reshape(g_shape)

    def backward(g: np.ndarray):
        dgamma = (g * xhat).sum(axis=axes)
        dbeta = g.sum(axis=axes)
        dxhat = g * gamma.data.reshape(g_shape)
        if not training:
            return dxhat * inv_std, dgamma, dbeta
        n = x.data.size // x.shape[1]
        dx = inv_std / n * (
            n * dxhat
            - dxhat.sum(axis=axes, keepdims=True)
            - xhat * (dxhat * xhat).sum(axis=axes, keepdims=True)
        )
        return dx, dgamma, dbeta

    return make_node(out.astype(x.dtype), (x, gamma, beta), backward)


# ---- convolution and pooling -------------------------------------------------


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, pad: int = 0) -> Tensor:
    """2-D cross-correlation of (N, Cin, H, W) with (Cout, Cin, kh, kw)."""
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"conv2d input {x.shape} vs weight {weight.shape}")
    n, cin, h, w = x.shape
    cout, _, kh, kw = weight.shape
    if kh > h + 2 * pad or kw > w + 2 * pad:
        raise ShapeError(f"kernel {kh}x{kw} larger than padded input {h + 2 * pad}x{w + 2 * pad}")

    padded = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
    windows = sliding_window_view(padded, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    oh, ow = windows.shape[2], windows.shape[3]
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, cin * kh * kw)
    kernel = weight.data.reshape(cout, -1)

    out = cols @ kernel.T
    if bias is not None:
        out = out + bias.data
    out = out.reshape(n, oh, ow, cout).transpose(0, 3, 1, 2)

    def backward(g: np.ndarray):
        flat_g = g.transpose(0, 2, 3, 1).reshape(-1, cout)
        dweight = (flat_g.T @ cols).reshape(weight.shape)
        dcols = (flat_g @ kernel).reshape(n, oh, ow, cin, kh, kw)
        dpadded = np.zeros_like(padded)
        for i in range(kh):
            for j in range(kw):
                dpadded[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += (
                    dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
                )
        dx = dpadded[:, :, pad : pad + h, pad : pad + w] if pad else dpadded
        grads = [dx, dweight]
        if bias is not None:
            grads.append(flat_g.sum(axis=0))
        return grads

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_node(np.ascontiguousarray(out), parents, backward)


PadMode = Literal["zero", "edge"]


def pad1d(x: Tensor, left: int, right: int, mode: PadMode = "zero") -> Tensor:
    """Pad the last axis of (N, C, T); ``edge`` repeats the boundary values."""
    if left == 0 and right == 0:
        return x
    width = ((0, 0),) * (x.ndim - 1) + ((left, right),)
    padded = np.pad(x.data, width, mode="edge" if mode == "edge" else "constant")
    length = x.shape[-1]

    def backward(g: np.ndarray):
        dx = g[..., left : left + length].copy()
        if mode == "edge":
            dx[..., 0] += g[..., :left].sum(axis=-1)
            dx[..., -1] += g[..., left + length :].sum(axis=-1)
        return (dx,)

    return make_node(padded, (x,), backward)


def conv1d(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Valid 1-D cross-correlation of (N, Cin, T) with (Cout, Cin, k)."""
    if x.ndim != 3 or weight.ndim != 3 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"conv1d input {x.shape} vs weight {weight.shape}")
    n, cin, length = x.shape
    cout, _, k = weight.shape
    if k > length:
        raise ShapeError(f"kernel {k} longer than input {length}")

    windows = sliding_window_view(x.data, k, axis=2)
    out_len = windows.shape[2]
    cols = windows.transpose(0, 2, 1, 3).reshape(n * out_len, cin * k)
    kernel = weight.data.reshape(cout, -1)
    out = cols @ kernel.T
    if bias is not None:
        out = out + bias.data
    out = out.reshape(n, out_len, cout).transpose(0, 2, 1)

    def backward(g: np.ndarray):
        flat_g = g.transpose(0, 2, 1).reshape(-1, cout)
        dweight = (flat_g.T @ cols).reshape(weight.shape)
        dcols = (flat_g @ kernel).reshape(n, out_len, cin, k)
        dx = np.zeros_like(x.data)
        for i in range(k):
            dx[:, :, i : i + out_len] += dcols[:, :, :, i].transpose(0, 2, 1)
        grads = [dx, dweight]
        if bias is not None:
            grads.append(flat_g.sum(axis=0))
        return grads

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_node(np.ascontiguousarray(out), parents, backward)


def maxpool2(x: Tensor) -> Tensor:
    """2x2 max pooling, stride 2; a trailing odd row or column is dropped.

    Gradient goes to the first maximum in row-major window order.
    """
    if x.ndim != 4:
        raise ShapeError(f"maxpool2 expects (N, C, H, W), got {x.shape}")
    n, c, h, w = x.shape
    if h < 2 or w < 2:
        raise ShapeError(f"maxpool2 needs H, W >= 2, got {h}x{w}")
    oh, ow = h // 2, w // 2

    cropped = x.data[:, :, : 2 * oh, : 2 * ow]
    windows = cropped.reshape(n, c, oh, 2, ow, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, oh, ow, 4)
    argmax = windows.argmax(axis=-1)
    _record_kink(argmax)
    out = np.take_along_axis(windows, argmax[..., None], axis=-1)[..., 0]

    def backward(g: np.ndarray):
        dwin = np.zeros_like(windows)
        np.put_along_axis(dwin, argmax[..., None], g[..., None], axis=-1)
        dcrop = dwin.reshape(n, c, oh, ow, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * oh, 2 * ow)
        dx = np.zeros_like(x.data)
        dx[:, :, : 2 * oh, : 2 * ow] = dcrop
        return (dx,)

    return make_node(np.ascontiguousarray(out), (x,), backward)


def global_avg_pool(x: Tensor) -> Tensor:
    """Mean over every axis after the channel axis."""
    return x.mean(axis=tuple(range(2, x.ndim)))


def flatten(x: Tensor) -> Tensor:
    return x.reshape(x.shape[0], -1)


def scale(x: Tensor, factor: float) -> Tensor:
    return x * as_tensor(factor, like=x)
