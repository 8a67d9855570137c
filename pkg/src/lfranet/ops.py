"""Differentiable operations on 4-d image tensors (batch, channel, H, W).

Convolutions run as im2col/col2im plus BLAS matmuls; the data-movement
kernels come from :mod:`lfranet.backend` (compiled extension when built,
NumPy otherwise).  Every op preserves the input dtype and is deterministic
for fixed inputs and rng state.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from . import backend as B
from .autodiff import Tensor, make_node
from .errors import ShapeMismatchError


def _pair(v) -> tuple:
    if isinstance(v, (tuple, list)):
        a, b = v
        return int(a), int(b)
    return int(v), int(v)


def _require_4d(x: Tensor, what: str) -> None:
    if x.ndim != 4:
        raise ShapeMismatchError(f"{what} must be 4-d (N,C,H,W), got shape {x.shape}")


def _carray(a: np.ndarray) -> np.ndarray:
    """Contiguous writable copy-if-needed (compiled kernels reject read-only views)."""
    out = np.ascontiguousarray(a)
    if not out.flags.writeable:
        out = out.copy()
    return out


def conv2d(
    x: Tensor,
    w: Tensor,
    b: Optional[Tensor] = None,
    stride=(1, 1),
    padding=(0, 0),
    dilation=(1, 1),
) -> Tensor:
    """2-d cross-correlation; weights are [Cout, Cin, Kh, Kw]."""
    _require_4d(x, "conv2d input")
    _require_4d(w, "conv2d weight")
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    dh, dw = _pair(dilation)
    n, cin, h, wth = x.shape
    cout, cin_w, kh, kw = w.shape
    if cin != cin_w:
        raise ShapeMismatchError(f"conv2d channel mismatch: input {x.shape} vs weight {w.shape}")
    oh = (h + 2 * ph - dh * (kh - 1) - 1) // sh + 1
    ow = (wth + 2 * pw - dw * (kw - 1) - 1) // sw + 1
    if oh < 1 or ow < 1:
        raise ShapeMismatchError(
            f"conv2d output would be empty: input {x.shape}, kernel {(kh, kw)}, "
            f"stride {(sh, sw)}, padding {(ph, pw)}, dilation {(dh, dw)}"
        )
    xd, wd = x.data, w.data
    wf = wd.reshape(cout, -1)
    cols = B.im2col(xd, kh, kw, sh, sw, ph, pw, dh, dw)
    out = np.matmul(wf[None], cols)
    if b is not None:
        out = out + b.data.reshape(1, cout, 1)
    out = out.reshape(n, cout, oh, ow)

    parents = (x, w) if b is None else (x, w, b)

    def _bwd(g):
        gf = g.reshape(n, cout, oh * ow)
        gx = gw = gb = None
        if x.requires_grad:
            prod = np.ascontiguousarray(np.matmul(wf.T[None], gf))
            gx = B.col2im(prod, h, wth, kh, kw, sh, sw, ph, pw, dh, dw)
        if w.requires_grad:
            cols_b = B.im2col(xd, kh, kw, sh, sw, ph, pw, dh, dw)
            gw = np.tensordot(gf, cols_b, axes=([0, 2], [0, 2])).reshape(wd.shape)
        if b is not None and b.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        return (gx, gw) if b is None else (gx, gw, gb)

    return make_node(out, parents, _bwd)


def conv_transpose2d(
    x: Tensor,
    w: Tensor,
    b: Optional[Tensor] = None,
    stride=(1, 1),
    padding=(0, 0),
    output_padding=(0, 0),
) -> Tensor:
    """Transposed convolution, the adjoint of conv2d; weights are [Cin, Cout, Kh, Kw]."""
    _require_4d(x, "conv_transpose2d input")
    _require_4d(w, "conv_transpose2d weight")
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    oph, opw = _pair(output_padding)
    if not (0 <= oph < sh and 0 <= opw < sw):
        raise ValueError(f"output_padding {(oph, opw)} must be < stride {(sh, sw)}")
    n, cin, h, wth = x.shape
    cin_w, cout, kh, kw = w.shape
    if cin != cin_w:
        raise ShapeMismatchError(
            f"conv_transpose2d channel mismatch: input {x.shape} vs weight {w.shape}"
        )
    oh = (h - 1) * sh - 2 * ph + kh + oph
    ow = (wth - 1) * sw - 2 * pw + kw + opw
    if oh < 1 or ow < 1:
        raise ShapeMismatchError(f"conv_transpose2d output would be empty for input {x.shape}")
    xd, wd = x.data, w.data
    xf = xd.reshape(n, cin, h * wth)
    wf = wd.reshape(cin, cout * kh * kw)
    prod = np.ascontiguousarray(np.matmul(wf.T[None], xf))
    out = B.col2im(prod, oh, ow, kh, kw, sh, sw, ph, pw, 1, 1)
    if b is not None:
        out = out + b.data.reshape(1, cout, 1, 1)

    parents = (x, w) if b is None else (x, w, b)

    def _bwd(g):
        cols_g = B.im2col(_carray(g), kh, kw, sh, sw, ph, pw, 1, 1)
        gx = gw = gb = None
        if x.requires_grad:
            gx = np.matmul(wf[None], cols_g).reshape(xd.shape)
        if w.requires_grad:
            gw = np.tensordot(xf, cols_g, axes=([0, 2], [0, 2])).reshape(wd.shape)
        if b is not None and b.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        return (gx, gw) if b is None else (gx, gw, gb)

    return make_node(out, parents, _bwd)


def depthwise_conv2d(x: Tensor, w: Tensor, b: Optional[Tensor] = None, padding=None) -> Tensor:
    """Per-channel convolution (stride 1); weights are [C, 1, K, K] with odd K."""
    _require_4d(x, "depthwise input")
    _require_4d(w, "depthwise weight")
    n, c, h, wth = x.shape
    cw, one, kh, kw = w.shape
    if cw != c or one != 1:
        raise ShapeMismatchError(f"depthwise weight must be [{c},1,K,K], got {w.shape}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError(f"depthwise kernel must be odd-sized, got {(kh, kw)}")
    ph, pw = _pair(padding) if padding is not None else ((kh - 1) // 2, (kw - 1) // 2)
    xd, wd = x.data, w.data
    out = B.dwconv_forward(xd, wd, ph, pw)
    if b is not None:
        out = out + b.data.reshape(1, c, 1, 1)
    oh, ow = out.shape[2], out.shape[3]

    parents = (x, w) if b is None else (x, w, b)

    def _bwd(g):
        g = _carray(g)
        gx = gw = gb = None
        if x.requires_grad:
            gx = B.dwconv_backward_x(g, wd, h, wth, ph, pw)
        if w.requires_grad:
            xp = np.pad(xd, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
            gw = np.empty_like(wd)
            for i in range(kh):
                for j in range(kw):
                    gw[:, 0, i, j] = np.sum(g * xp[:, :, i : i + oh, j : j + ow], axis=(0, 2, 3))
        if b is not None and b.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        return (gx, gw) if b is None else (gx, gw, gb)

    return make_node(out, parents, _bwd)


def pool2d(x: Tensor, kind: str, kernel: int, stride: Optional[int] = None) -> Tensor:
    """Max or average pooling; trailing rows/columns that do not fit are dropped."""
    _require_4d(x, "pool2d input")
    if kind not in ("max", "avg"):
        raise ValueError(f"pool kind must be 'max' or 'avg', got {kind!r}")
    k = int(kernel)
    s = int(stride) if stride is not None else k
    n, c, h, w = x.shape
    if k > h or k > w:
        raise ShapeMismatchError(f"pool kernel {k} larger than input extents {(h, w)}")
    xd = x.data
    if kind == "max":
        out, idx = B.maxpool_forward(xd, k, s)

        def _bwd(g):
            return (B.maxpool_backward(_carray(g), idx, h, w),)

    else:
        out = B.avgpool_forward(xd, k, s)

        def _bwd(g):
            return (B.avgpool_backward(_carray(g), h, w, k, s),)

    return make_node(out, (x,), _bwd)


def global_avg_pool(x: Tensor) -> Tensor:
    """Mean over the spatial extents, to [N, C, 1, 1]."""
    _require_4d(x, "global_avg_pool input")
    n, c, h, w = x.shape
    out = x.data.mean(axis=(2, 3), keepdims=True)

    def _bwd(g):
        share = g * x.data.dtype.type(1.0 / (h * w))
        return (np.broadcast_to(share, x.data.shape),)

    return make_node(out, (x,), _bwd)


def batch_norm2d(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    train: bool,
    eps: float = 1e-5,
    momentum: float = 0.1,
) -> Tensor:
    """Per-channel batch normalization.

    Train mode normalizes with (biased) batch statistics and updates the
    running buffers in place; infer mode uses the running buffers.
    """
    _require_4d(x, "batch_norm input")
    n, c, h, w = x.shape
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeMismatchError(f"batch_norm expects gamma/beta of shape ({c},), got {gamma.shape}/{beta.shape}")
    xd = x.data
    dt = xd.dtype.type
    if train:
        mu = xd.mean(axis=(0, 2, 3))
        var = xd.var(axis=(0, 2, 3))
        running_mean *= dt(1.0 - momentum)
        running_mean += dt(momentum) * mu
        running_var *= dt(1.0 - momentum)
        running_var += dt(momentum) * var
    else:
        mu = running_mean.astype(xd.dtype, copy=False)
        var = running_var.astype(xd.dtype, copy=False)
    inv = 1.0 / np.sqrt(var + dt(eps))
    xhat = (xd - mu[None, :, None, None]) * inv[None, :, None, None]
    out = gamma.data[None, :, None, None] * xhat + beta.data[None, :, None, None]

    def _bwd(g):
        gx = ggamma = gbeta = None
        if gamma.requires_grad:
            ggamma = (g * xhat).sum(axis=(0, 2, 3))
        if beta.requires_grad:
            gbeta = g.sum(axis=(0, 2, 3))
        if x.requires_grad:
            scale = (gamma.data * inv)[None, :, None, None]
            if train:
                mean_g = g.mean(axis=(0, 2, 3))[None, :, None, None]
                mean_gx = (g * xhat).mean(axis=(0, 2, 3))[None, :, None, None]
                gx = scale * (g - mean_g - xhat * mean_gx)
            else:
                gx = scale * g
        return gx, ggamma, gbeta

    return make_node(out, (x, gamma, beta), _bwd)


def leaky_relu(x: Tensor, alpha: float = 0.3) -> Tensor:
    xd = x.data
    a = xd.dtype.type(alpha)
    out = np.where(xd > 0, xd, a * xd)

    def _bwd(g):
        return (np.where(xd > 0, g, a * g),)

    return make_node(out, (x,), _bwd)


def relu(x: Tensor) -> Tensor:
    xd = x.data
    out = np.maximum(xd, 0)

    def _bwd(g):
        return (np.where(xd > 0, g, xd.dtype.type(0)),)

    return make_node(out, (x,), _bwd)


def sigmoid(x: Tensor) -> Tensor:
    xd = x.data
    # split by sign for overflow-free evaluation
    out = np.empty_like(xd)
    pos = xd >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-xd[pos]))
    ex = np.exp(xd[~pos])
    out[~pos] = ex / (1.0 + ex)

    def _bwd(g):
        return (g * out * (1.0 - out),)

    return make_node(out, (x,), _bwd)


def activation(x: Tensor, kind: str, alpha: float = 0.3) -> Tensor:
    if kind == "leaky_relu":
        return leaky_relu(x, alpha)
    if kind == "relu":
        return relu(x)
    if kind == "sigmoid":
        return sigmoid(x)
    raise ValueError(f"unknown activation {kind!r}")


def dropout(x: Tensor, p: float, train: bool, rng: Optional[np.random.Generator] = None) -> Tensor:
    """Inverted dropout: survivors are scaled by 1/(1-p) so inference is identity."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if not train or p == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in train mode needs an rng stream")
    xd = x.data
    factor = (rng.random(xd.shape) >= p).astype(xd.dtype) * xd.dtype.type(1.0 / (1.0 - p))
    out = xd * factor

    def _bwd(g):
        return (g * factor,)

    return make_node(out, (x,), _bwd)


def concat_channels(xs: Sequence[Tensor]) -> Tensor:
    """Concatenate along the channel axis; blocks keep argument order."""
    if len(xs) == 0:
        raise ValueError("concat_channels needs at least one input")
    if len(xs) == 1:
        return xs[0]
    for t in xs:
        _require_4d(t, "concat input")
    first = xs[0].shape
    for t in xs[1:]:
        n, _, h, w = t.shape
        if (n, h, w) != (first[0], first[2], first[3]):
            raise ShapeMismatchError(
                f"concat_channels spatial/batch mismatch: {first} vs {t.shape}"
            )
    out = np.concatenate([t.data for t in xs], axis=1)
    splits = np.cumsum([t.shape[1] for t in xs])[:-1]

    def _bwd(g):
        return tuple(np.ascontiguousarray(part) for part in np.split(g, splits, axis=1))

    return make_node(out, tuple(xs), _bwd)


def slice_channels(x: Tensor, start: int, stop: int) -> Tensor:
    """View of channels [start, stop); gradient flows only into that slice."""
    _require_4d(x, "slice input")
    n, c, h, w = x.shape
    if not 0 <= start < stop <= c:
        raise ShapeMismatchError(f"channel slice [{start}:{stop}] out of range for {c} channels")
    out = np.ascontiguousarray(x.data[:, start:stop])

    def _bwd(g):
        gx = np.zeros_like(x.data)
        gx[:, start:stop] = g
        return (gx,)

    return make_node(out, (x,), _bwd)


def elementwise(a: Tensor, b: Tensor, op: str) -> Tensor:
    """Elementwise multiply/add; extent-1 axes of either operand broadcast."""
    if op == "mul":
        return a * b
    if op == "add":
        return a + b
    raise ValueError(f"elementwise op must be 'mul' or 'add', got {op!r}")


def upsample_nearest(x: Tensor, factor: int) -> Tensor:
    """Nearest-neighbour upsampling by an integer factor."""
    _require_4d(x, "upsample input")
    f = int(factor)
    n, c, h, w = x.shape
    out = x.data.repeat(f, axis=2).repeat(f, axis=3)

    def _bwd(g):
        return (g.reshape(n, c, h, f, w, f).sum(axis=(3, 5)),)

    return make_node(out, (x,), _bwd)


def group_channel_mean(x: Tensor, groups: int) -> Tensor:
    """Mean over each contiguous block of C/groups channels, to [N, groups, H, W]."""
    _require_4d(x, "group mean input")
    n, c, h, w = x.shape
    if c % groups != 0:
        raise ShapeMismatchError(f"channels {c} not divisible into {groups} groups")
    m = c // groups
    out = x.data.reshape(n, groups, m, h, w).mean(axis=2)

    def _bwd(g):
        share = g * x.data.dtype.type(1.0 / m)
        return (np.broadcast_to(share[:, :, None], (n, groups, m, h, w)).reshape(n, c, h, w),)

    return make_node(out, (x,), _bwd)


def tensor_sum(x: Tensor) -> Tensor:
    return x.sum()
