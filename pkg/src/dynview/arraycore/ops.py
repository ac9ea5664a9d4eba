"""Forward/backward definitions for every operation the model needs.

No broadcasting anywhere: shapes must match exactly (concat: on all
non-concat axes). Convolutions are cross-correlations computed by im2col +
matmul with a fixed reduction order, so forward passes are deterministic
for fixed inputs.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError
from .tensor import Tensor, make_result


def _check_same_shape(a, b, what):
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shape mismatch {a.shape} vs {b.shape}")


# ---------------------------------------------------------------------------
# elementwise / structural

def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "add")

    def backward(g):
        a.accumulate_grad(g)
        b.accumulate_grad(g)

    return make_result(a.data + b.data, (a, b), backward)


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)

    def backward(g):
        a.accumulate_grad(g * s)

    return make_result(a.data * s, (a,), backward)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def backward(g):
        a.accumulate_grad(g * mask)

    return make_result(a.data * mask, (a,), backward)


def leaky_relu(a: Tensor, alpha: float = 0.2) -> Tensor:
    mask = a.data > 0
    slope = np.where(mask, 1.0, alpha).astype(a.data.dtype)

    def backward(g):
        a.accumulate_grad(g * slope)

    return make_result(a.data * slope, (a,), backward)


def concat(tensors, axis: int) -> Tensor:
    ref = tensors[0].shape
    for t in tensors[1:]:
        if len(t.shape) != len(ref) or any(
                t.shape[i] != ref[i] for i in range(len(ref)) if i != axis):
            raise ShapeError(f"concat: incompatible shapes {[t.shape for t in tensors]}")
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * len(ref)
            sl[axis] = slice(lo, hi)
            t.accumulate_grad(g[tuple(sl)])

    return make_result(np.concatenate([t.data for t in tensors], axis=axis),
                       tuple(tensors), backward)


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)

    def backward(g):
        a.accumulate_grad(g.reshape(a.data.shape))

    return make_result(a.data.reshape(shape), (a,), backward)


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))

    def backward(g):
        a.accumulate_grad(np.ascontiguousarray(g.transpose(inv)))

    return make_result(np.ascontiguousarray(a.data.transpose(axes)), (a,), backward)


def mean_axis(a: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    n = a.shape[axis]

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        a.accumulate_grad(np.repeat(g / n, n, axis=axis))

    return make_result(a.data.mean(axis=axis, keepdims=keepdims), (a,), backward)


def instance_norm(x: Tensor, gamma: Tensor, beta: Tensor,
                  eps: float = 1e-5) -> Tensor:
    """Per-channel normalization over all trailing axes of an (N, C, ...) map.

    out = gamma * (x - mean) / sqrt(var + eps) + beta, with mean/var taken
    independently for every (sample, channel) pair.
    """
    if x.data.ndim < 3:
        raise ShapeError(f"instance_norm: need (N, C, ...) input, got {x.shape}")
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"instance_norm: gamma/beta must be ({c},)")
    axes = tuple(range(2, x.data.ndim))
    n = int(np.prod([x.shape[i] for i in axes]))
    mu = x.data.mean(axis=axes, keepdims=True)
    var = ((x.data - mu) ** 2).mean(axis=axes, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    gshape = (1, c) + (1,) * len(axes)
    g_b = gamma.data.reshape(gshape)

    def backward(g):
        gamma.accumulate_grad((g * xhat).sum(axis=(0,) + axes))
        beta.accumulate_grad(g.sum(axis=(0,) + axes))
        gy = g * g_b
        # d xhat -> d x through the shared mean/std statistics
        dx = inv * (gy - gy.mean(axis=axes, keepdims=True)
                    - xhat * (gy * xhat).mean(axis=axes, keepdims=True))
        x.accumulate_grad(dx.astype(x.data.dtype))

    out = g_b * xhat + beta.data.reshape(gshape)
    return make_result(out.astype(x.data.dtype), (x, gamma, beta), backward)


def weighted_sum(a: Tensor, weights: np.ndarray) -> Tensor:
    """Scalar projection sum(a * weights) for a constant weight array."""
    _check_same_shape(a, Tensor(weights), "weighted_sum")
    w = np.asarray(weights, dtype=a.data.dtype)

    def backward(g):
        a.accumulate_grad(w * g.reshape(()))

    return make_result(np.array((a.data * w).sum(), dtype=a.data.dtype), (a,), backward)


def l1_loss(pred: Tensor, target: Tensor) -> Tensor:
    _check_same_shape(pred, target, "l1_loss")
    diff = pred.data - target.data
    n = diff.size

    def backward(g):
        s = np.sign(diff) / n
        pred.accumulate_grad(s * g.reshape(()))
        target.accumulate_grad(-s * g.reshape(()))

    return make_result(np.array(np.abs(diff).mean(), dtype=pred.data.dtype),
                       (pred, target), backward)


# ---------------------------------------------------------------------------
# convolutions

def _pair(v, n):
    return tuple(v) if isinstance(v, (tuple, list)) else (v,) * n


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride=1, padding=0) -> Tensor:
    """Cross-correlation: x (N,Cin,H,W), w (Cout,Cin,k,k), b (Cout,)."""
    sy, sx = _pair(stride, 2)
    py, px = _pair(padding, 2)
    n, cin, h, wdt = x.shape
    cout, cin_w, kh, kw = w.shape
    if cin != cin_w or b.shape != (cout,):
        raise ShapeError(f"conv2d: incompatible shapes {x.shape} {w.shape} {b.shape}")
    ho = (h + 2 * py - kh) // sy + 1
    wo = (wdt + 2 * px - kw) // sx + 1
    if ho < 1 or wo < 1:
        raise ShapeError("conv2d: empty output")

    xp = np.pad(x.data, ((0, 0), (0, 0), (py, py), (px, px)))
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sy, ::sx]
    # (N, Cin, Ho, Wo, kh, kw) -> (N*Ho*Wo, Cin*kh*kw)
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(
        n * ho * wo, cin * kh * kw)
    wmat = w.data.reshape(cout, cin * kh * kw)
    out = cols @ wmat.T + b.data
    out = np.ascontiguousarray(out.reshape(n, ho, wo, cout).transpose(0, 3, 1, 2))

    def backward(g):
        gmat = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(n * ho * wo, cout)
        w.accumulate_grad((gmat.T @ cols).reshape(w.data.shape))
        b.accumulate_grad(gmat.sum(axis=0))
        gcols = (gmat @ wmat).reshape(n, ho, wo, cin, kh, kw)
        gxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                gxp[:, :, i:i + sy * ho:sy, j:j + sx * wo:sx] += \
                    gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        if py or px:
            gxp = gxp[:, :, py:py + h, px:px + wdt]
        x.accumulate_grad(gxp)

    return make_result(out, (x, w, b), backward)


def conv3d(x: Tensor, w: Tensor, b: Tensor, stride=1, padding=0) -> Tensor:
    """Cross-correlation: x (N,Cin,D,H,W), w (Cout,Cin,kd,kh,kw), b (Cout,)."""
    sd, sy, sx = _pair(stride, 3)
    pd, py, px = _pair(padding, 3)
    n, cin, d, h, wdt = x.shape
    cout, cin_w, kd, kh, kw = w.shape
    if cin != cin_w or b.shape != (cout,):
        raise ShapeError(f"conv3d: incompatible shapes {x.shape} {w.shape} {b.shape}")
    do = (d + 2 * pd - kd) // sd + 1
    ho = (h + 2 * py - kh) // sy + 1
    wo = (wdt + 2 * px - kw) // sx + 1
    if do < 1 or ho < 1 or wo < 1:
        raise ShapeError("conv3d: empty output")

    xp = np.pad(x.data, ((0, 0), (0, 0), (pd, pd), (py, py), (px, px)))
    win = sliding_window_view(xp, (kd, kh, kw), axis=(2, 3, 4))[:, :, ::sd, ::sy, ::sx]
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 4, 1, 5, 6, 7)).reshape(
        n * do * ho * wo, cin * kd * kh * kw)
    wmat = w.data.reshape(cout, cin * kd * kh * kw)
    out = cols @ wmat.T + b.data
    out = np.ascontiguousarray(
        out.reshape(n, do, ho, wo, cout).transpose(0, 4, 1, 2, 3))

    def backward(g):
        gmat = np.ascontiguousarray(g.transpose(0, 2, 3, 4, 1)).reshape(
            n * do * ho * wo, cout)
        w.accumulate_grad((gmat.T @ cols).reshape(w.data.shape))
        b.accumulate_grad(gmat.sum(axis=0))
        gcols = (gmat @ wmat).reshape(n, do, ho, wo, cin, kd, kh, kw)
        gxp = np.zeros_like(xp)
        for a in range(kd):
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, a:a + sd * do:sd, i:i + sy * ho:sy, j:j + sx * wo:sx] += \
                        gcols[:, :, :, :, :, a, i, j].transpose(0, 4, 1, 2, 3)
        if pd or py or px:
            gxp = gxp[:, :, pd:pd + d, py:py + h, px:px + wdt]
        x.accumulate_grad(gxp)

    return make_result(out, (x, w, b), backward)


# ---------------------------------------------------------------------------
# resampling

def avgpool_2x(x: Tensor) -> Tensor:
    """2x2 mean pooling over the last two axes (which must be even)."""
    h, w = x.shape[-2], x.shape[-1]
    if h % 2 or w % 2:
        raise ShapeError(f"avgpool_2x: odd spatial dims {h}x{w}")
    lead = x.shape[:-2]
    blocks = x.data.reshape(*lead, h // 2, 2, w // 2, 2)

    def backward(g):
        gx = np.repeat(np.repeat(g, 2, axis=-2), 2, axis=-1) / 4.0
        x.accumulate_grad(gx.astype(x.data.dtype))

    return make_result(blocks.mean(axis=(-3, -1)), (x,), backward)


def _upsample_matrix(n_in, dtype):
    """(2n x n) bilinear 2x interpolation matrix, pixel centers aligned."""
    m = np.zeros((2 * n_in, n_in), dtype=dtype)
    for o in range(2 * n_in):
        src = (o + 0.5) / 2.0 - 0.5
        i0 = int(np.floor(src))
        t = src - i0
        i0c = min(max(i0, 0), n_in - 1)
        i1c = min(max(i0 + 1, 0), n_in - 1)
        m[o, i0c] += 1 - t
        m[o, i1c] += t
    return m


def resize_bilinear_2x(x: Tensor) -> Tensor:
    """2x bilinear upsampling of the last two axes."""
    h, w = x.shape[-2], x.shape[-1]
    my = _upsample_matrix(h, np.float64).astype(x.data.dtype)
    mx = _upsample_matrix(w, np.float64).astype(x.data.dtype)
    out = np.einsum("ij,...jk,lk->...il", my, x.data, mx, optimize=True)

    def backward(g):
        gx = np.einsum("ij,...ik,kl->...jl", my, g, mx, optimize=True)
        x.accumulate_grad(np.ascontiguousarray(gx.astype(x.data.dtype)))

    return make_result(np.ascontiguousarray(out), (x,), backward)


def warp(image: Tensor, grid) -> Tensor:
    """Bilinear sampling of a (C,H,W) image at a geometry SamplingGrid.

    Zero padding outside the image and for non-positive source depth; linear
    in (and differentiable w.r.t.) the image values.
    """
    from ..geometry import bilinear_weights

    c, h, w = image.shape
    i00, i01, i10, i11, w00, w01, w10, w11 = bilinear_weights(grid, h, w)
    dt = image.data.dtype
    w00, w01, w10, w11 = (a.astype(dt) for a in (w00, w01, w10, w11))
    flat = image.data.reshape(c, h * w)
    out = (flat[:, i00] * w00 + flat[:, i01] * w01
           + flat[:, i10] * w10 + flat[:, i11] * w11)

    def backward(g):
        gflat = np.zeros((c, h * w), dtype=dt)
        for idx, wt in ((i00, w00), (i01, w01), (i10, w10), (i11, w11)):
            contrib = (g * wt).reshape(c, -1)
            np.add.at(gflat, (slice(None), idx.reshape(-1)), contrib)
        image.accumulate_grad(gflat.reshape(c, h, w))

    return make_result(np.ascontiguousarray(out), (image,), backward)
