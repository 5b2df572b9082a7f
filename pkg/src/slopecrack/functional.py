"""Neural-network kernels with hand-written backward rules.

Images use NCHW layout. Convolutions are cross-correlations (no kernel flip)
computed through an im2col view; the backward pass scatters column gradients
back with one strided add per kernel offset.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import ShapeError, Tensor, as_tensor, make_result, matmul, reshape, transpose

Pair = Union[int, Sequence[int]]


def _pair(v: Pair) -> tuple[int, int]:
    if isinstance(v, (int, np.integer)):
        return int(v), int(v)
    a, b = v
    return int(a), int(b)


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def _windows(x: np.ndarray, kh: int, kw: int, stride: int, ph: int, pw: int,
             pad_value: float = 0.0):
    """Return padded input and its (N, C, Ho, Wo, kh, kw) window view."""
    if ph or pw:
        x = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)), constant_values=pad_value)
    view = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    return x, view


def _scatter_windows(dwin: np.ndarray, padded_shape: tuple, stride: int, ph: int, pw: int):
    """Adjoint of :func:`_windows`: sum window gradients back onto the input.

    ``dwin`` is laid out (kh, kw, N, C, Ho, Wo) so each offset's slab is contiguous.
    """
    kh, kw, n, c, ho, wo = dwin.shape
    dx = np.zeros(padded_shape)
    for i in range(kh):
        for j in range(kw):
            dx[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += dwin[i, j]
    hp, wp = padded_shape[2], padded_shape[3]
    return dx[:, :, ph:hp - ph, pw:wp - pw]


def _check_spatial(op: str, h: int, w: int, kh: int, kw: int, ph: int, pw: int):
    if kh > h + 2 * ph:
        raise ShapeError(f"{op}: kernel height {kh} exceeds padded input height {h + 2 * ph}")
    if kw > w + 2 * pw:
        raise ShapeError(f"{op}: kernel width {kw} exceeds padded input width {w + 2 * pw}")


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None, stride: int = 1,
           padding: Pair = 0) -> Tensor:
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(f"conv2d: expected 4-d input and weight, got {x.shape} and {weight.shape}")
    n, cin, h, w = x.shape
    cout, wcin, kh, kw = weight.shape
    if wcin != cin:
        raise ShapeError(f"conv2d: input channels {cin} != weight input channels {wcin}")
    if bias is not None and bias.shape != (cout,):
        raise ShapeError(f"conv2d: bias shape {bias.shape} != ({cout},)")
    if stride < 1:
        raise ShapeError(f"conv2d: stride must be positive, got {stride}")
    ph, pw = _pair(padding)
    _check_spatial("conv2d", h, w, kh, kw, ph, pw)

    xp, win = _windows(x.data, kh, kw, stride, ph, pw)
    ho, wo = win.shape[2], win.shape[3]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, cin * kh * kw)
    wmat = weight.data.reshape(cout, -1)
    out = cols @ wmat.T
    if bias is not None:
        out += bias.data
    out = out.reshape(n, ho, wo, cout).transpose(0, 3, 1, 2)

    def back(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(-1, cout)
        dw = (g2.T @ cols).reshape(weight.shape)
        dx = None
        if x.requires_grad:
            dcols = (g2 @ wmat).reshape(n, ho, wo, cin, kh, kw)
            dcols = np.ascontiguousarray(dcols.transpose(4, 5, 0, 3, 1, 2))
            dx = _scatter_windows(dcols, xp.shape, stride, ph, pw)
        db = g.sum(axis=(0, 2, 3)) if bias is not None else None
        return dx, dw, db

    inputs = (x, weight, bias) if bias is not None else (x, weight)
    return make_result(out, inputs, back, "conv2d")


def depthwise_conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None, stride: int = 1,
                     padding: Pair = 0) -> Tensor:
    """Per-channel convolution: output channel c sees only input channel c."""
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(f"depthwise_conv2d: expected 4-d input and weight, got {x.shape} and {weight.shape}")
    n, c, h, w = x.shape
    wc, one, kh, kw = weight.shape
    if wc != c or one != 1:
        raise ShapeError(f"depthwise_conv2d: weight {weight.shape} does not match {c} input channels")
    if bias is not None and bias.shape != (c,):
        raise ShapeError(f"depthwise_conv2d: bias shape {bias.shape} != ({c},)")
    ph, pw = _pair(padding)
    _check_spatial("depthwise_conv2d", h, w, kh, kw, ph, pw)

    xp, win = _windows(x.data, kh, kw, stride, ph, pw)
    k = weight.data[:, 0]
    out = np.einsum("nchwij,cij->nchw", win, k, optimize=True)
    if bias is not None:
        out += bias.data[None, :, None, None]

    def back(g):
        dk = np.einsum("nchwij,nchw->cij", win, g, optimize=True)[:, None]
        dwin = k.transpose(1, 2, 0)[:, :, None, :, None, None] * g[None, None]
        dx = _scatter_windows(dwin, xp.shape, stride, ph, pw)
        db = g.sum(axis=(0, 2, 3)) if bias is not None else None
        return dx, dk, db

    inputs = (x, weight, bias) if bias is not None else (x, weight)
    return make_result(out, inputs, back, "depthwise_conv2d")


def pool2d(x: Tensor, kind: str, window: int, stride: Optional[int] = None,
           padding: int = 0) -> Tensor:
    """Max or average pooling. Padding cells are -inf for max and count as
    zeros for average (the divisor is always ``window**2``)."""
    if kind not in ("max", "avg"):
        raise ValueError(f"pool2d: kind must be 'max' or 'avg', got {kind!r}")
    stride = window if stride is None else stride
    if window < 1 or stride < 1:
        raise ShapeError("pool2d: window and stride must be positive")
    n, c, h, w = x.shape
    if window > h + 2 * padding or window > w + 2 * padding:
        raise ShapeError(f"pool2d: window {window} larger than spatial extent {h}x{w}")

    fill = -np.inf if kind == "max" else 0.0
    xp, win = _windows(x.data, window, window, stride, padding, padding, fill)
    ho, wo = win.shape[2], win.shape[3]

    if kind == "max":
        flat = win.reshape(n, c, ho, wo, window * window)
        arg = flat.argmax(axis=-1)
        out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]

        def back(g):
            dwin = np.zeros((n, c, ho, wo, window * window))
            np.put_along_axis(dwin, arg[..., None], g[..., None], axis=-1)
            dwin = np.ascontiguousarray(dwin.transpose(4, 0, 1, 2, 3)).reshape(window, window, n, c, ho, wo)
            return (_scatter_windows(dwin, xp.shape, stride, padding, padding),)
    else:
        area = float(window * window)
        out = win.sum(axis=(-2, -1)) / area

        def back(g):
            dwin = np.broadcast_to(g / area, (window, window, n, c, ho, wo))
            return (_scatter_windows(dwin, xp.shape, stride, padding, padding),)

    return make_result(out, (x,), back, f"{kind}pool2d")


def dense(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """``x @ weight + bias`` over the last axis of ``x`` (leading axes are batch)."""
    if weight.ndim != 2 or x.shape[-1] != weight.shape[0]:
        raise ShapeError(f"dense: input features {x.shape[-1]} != weight rows {weight.shape[0]}")
    fin, fout = weight.shape
    if bias is not None and bias.shape != (fout,):
        raise ShapeError(f"dense: bias shape {bias.shape} != ({fout},)")
    x2 = x.data.reshape(-1, fin)
    out = x2 @ weight.data
    if bias is not None:
        out += bias.data
    out = out.reshape(x.shape[:-1] + (fout,))

    def back(g):
        g2 = g.reshape(-1, fout)
        dx = (g2 @ weight.data.T).reshape(x.shape)
        dw = x2.T @ g2
        db = g2.sum(axis=0) if bias is not None else None
        return dx, dw, db

    inputs = (x, weight, bias) if bias is not None else (x, weight)
    return make_result(out, inputs, back, "dense")


@dataclass
class RunningStats:
    """Per-channel moving estimates used by batch norm in eval mode."""

    mean: np.ndarray
    var: np.ndarray
    momentum: float = 0.1

    @classmethod
    def fresh(cls, channels: int, momentum: float = 0.1) -> "RunningStats":
        return cls(np.zeros(channels), np.ones(channels), momentum)


def batchnorm2d(x: Tensor, gamma: Tensor, beta: Tensor, running: RunningStats,
                mode: str = "train", epsilon: float = 1e-5) -> Tensor:
    n, c, h, w = x.shape
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"batchnorm2d: gamma/beta must have shape ({c},)")
    bshape = (1, c, 1, 1)
    if mode == "train":
        count = n * h * w
        if count < 2:
            raise ShapeError("batchnorm2d: train mode needs at least 2 values per channel")
        mu = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        m = running.momentum
        running.mean = (1 - m) * running.mean + m * mu
        running.var = (1 - m) * running.var + m * var * count / (count - 1)
    elif mode == "eval":
        mu, var = running.mean, running.var
    else:
        raise ValueError(f"batchnorm2d: mode must be 'train' or 'eval', got {mode!r}")

    inv = 1.0 / np.sqrt(var + epsilon)
    xhat = (x.data - mu.reshape(bshape)) * inv.reshape(bshape)
    out = xhat * gamma.data.reshape(bshape) + beta.data.reshape(bshape)

    def back(g):
        dgamma = (g * xhat).sum(axis=(0, 2, 3))
        dbeta = g.sum(axis=(0, 2, 3))
        gx = g * gamma.data.reshape(bshape)
        if mode == "train":
            mean_g = gx.mean(axis=(0, 2, 3), keepdims=True)
            mean_gx = (gx * xhat).mean(axis=(0, 2, 3), keepdims=True)
            dx = (gx - mean_g - xhat * mean_gx) * inv.reshape(bshape)
        else:
            dx = gx * inv.reshape(bshape)
        return dx, dgamma, dbeta

    return make_result(out, (x, gamma, beta), back, "batchnorm2d")


def layernorm(x: Tensor, gamma: Tensor, beta: Tensor, epsilon: float = 1e-5) -> Tensor:
    d = x.shape[-1]
    if d < 2:
        raise ShapeError("layernorm: last axis must have at least 2 features")
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"layernorm: gamma/beta must have shape ({d},)")
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + epsilon)
    xhat = (x.data - mu) * inv
    out = xhat * gamma.data + beta.data

    def back(g):
        lead = tuple(range(g.ndim - 1))
        dgamma = (g * xhat).sum(axis=lead)
        dbeta = g.sum(axis=lead)
        gx = g * gamma.data
        dx = (gx - gx.mean(axis=-1, keepdims=True)
              - xhat * (gx * xhat).mean(axis=-1, keepdims=True)) * inv
        return dx, dgamma, dbeta

    return make_result(out, (x, gamma, beta), back, "layernorm")


def _softmax_array(z: np.ndarray, axis: int = -1) -> np.ndarray:
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    p = _softmax_array(x.data, axis)

    def back(g):
        return (p * (g - (g * p).sum(axis=axis, keepdims=True)),)

    return make_result(p, (x,), back, "softmax")


def cross_entropy_loss(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of ``labels`` under ``softmax(logits)``."""
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2:
        raise ShapeError(f"cross_entropy_loss: logits must be [N, K], got {logits.shape}")
    n, k = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"cross_entropy_loss: {labels.shape[0] if labels.ndim else 0} labels for {n} rows")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"cross_entropy_loss: labels must lie in [0, {k})")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(n)
    loss = np.mean(logsum - z[rows, labels])

    def back(g):
        p = np.exp(z - logsum[:, None])
        p[rows, labels] -= 1.0
        return (p * (g / n),)

    return make_result(np.asarray(loss), (logits,), back, "cross_entropy")


def multihead_attention(x: Tensor, wq: Tensor, bq: Tensor, wk: Tensor, bk: Tensor,
                        wv: Tensor, bv: Tensor, wo: Tensor, bo: Tensor, heads: int) -> Tensor:
    """Scaled dot-product self-attention over tokens of ``x`` [N, T, D]."""
    n, t, d = x.shape
    if heads < 1 or d % heads:
        raise ShapeError(f"multihead_attention: {heads} heads do not divide model width {d}")
    dh = d // heads

    def split(z: Tensor) -> Tensor:
        return transpose(reshape(z, (n, t, heads, dh)), (0, 2, 1, 3))

    q = split(dense(x, wq, bq))
    k = split(dense(x, wk, bk))
    v = split(dense(x, wv, bv))
    scores = matmul(q, transpose(k, (0, 1, 3, 2))) * (1.0 / math.sqrt(dh))
    attn = softmax(scores, axis=-1)
    ctx = reshape(transpose(matmul(attn, v), (0, 2, 1, 3)), (n, t, d))
    return dense(ctx, wo, bo)


def global_avg_pool(x: Tensor) -> Tensor:
    """[N, C, H, W] -> [N, C]."""
    return as_tensor(x).mean(axis=(2, 3))
