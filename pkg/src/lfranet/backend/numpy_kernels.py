"""NumPy fallback for the hot spatial kernels.

These functions mirror ``lfranet.backend._core`` (the Cython extension)
exactly, including floating-point accumulation order, so the two backends
produce bit-identical results.  Keep the (i, j) kernel-offset loop as the
outermost accumulation loop in every routine here; the compiled kernels use
the same order.
"""

import numpy as np
from numpy.lib.stride_tricks import as_strided

BACKEND_NAME = "numpy"


def _out_extent(size: int, k: int, stride: int, pad: int, dilation: int) -> int:
    return (size + 2 * pad - dilation * (k - 1) - 1) // stride + 1


def im2col(x, kh, kw, sh, sw, ph, pw, dh, dw):
    """Unfold x [N,C,H,W] into patch columns [N, C*kh*kw, OH*OW]."""
    n, c, h, w = x.shape
    oh = _out_extent(h, kh, sh, ph, dh)
    ow = _out_extent(w, kw, sw, pw, dw)
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    sn, sc, sr, sl = xp.strides
    view = as_strided(
        xp,
        shape=(n, c, kh, kw, oh, ow),
        strides=(sn, sc, sr * dh, sl * dw, sr * sh, sl * sw),
        writeable=False,
    )
    return np.ascontiguousarray(view).reshape(n, c * kh * kw, oh * ow)


def col2im(cols, h, w, kh, kw, sh, sw, ph, pw, dh, dw):
    """Adjoint of im2col: scatter-add columns back into an [N,C,H,W] array."""
    n = cols.shape[0]
    c = cols.shape[1] // (kh * kw)
    oh = _out_extent(h, kh, sh, ph, dh)
    ow = _out_extent(w, kw, sw, pw, dw)
    cols6 = cols.reshape(n, c, kh, kw, oh, ow)
    xp = np.zeros((n, c, h + 2 * ph, w + 2 * pw), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            xp[:, :, i * dh : i * dh + oh * sh : sh, j * dw : j * dw + ow * sw : sw] += cols6[:, :, i, j]
    return np.ascontiguousarray(xp[:, :, ph : ph + h, pw : pw + w])


def maxpool_forward(x, k, s):
    """Max pooling; also returns flat spatial argmax indices (first max wins)."""
    n, c, h, w = x.shape
    oh = (h - k) // s + 1
    ow = (w - k) // s + 1
    sn, sc, sr, sl = x.strides
    view = as_strided(x, (n, c, oh, ow, k, k), (sn, sc, sr * s, sl * s, sr, sl), writeable=False)
    flat = np.ascontiguousarray(view).reshape(n, c, oh, ow, k * k)
    win = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, win[..., None], axis=-1)[..., 0]
    rows = np.arange(oh, dtype=np.int64)[:, None] * s
    cols = np.arange(ow, dtype=np.int64)[None, :] * s
    idx = (rows + win // k) * w + (cols + win % k)
    return np.ascontiguousarray(out), np.ascontiguousarray(idx)


def maxpool_backward(g, idx, h, w):
    n, c = g.shape[:2]
    gx = np.zeros((n, c, h * w), dtype=g.dtype)
    np.add.at(gx, (np.arange(n)[:, None, None, None], np.arange(c)[None, :, None, None], idx), g)
    return gx.reshape(n, c, h, w)


def avgpool_forward(x, k, s):
    n, c, h, w = x.shape
    oh = (h - k) // s + 1
    ow = (w - k) // s + 1
    acc = np.zeros((n, c, oh, ow), dtype=x.dtype)
    for i in range(k):
        for j in range(k):
            acc += x[:, :, i : i + oh * s : s, j : j + ow * s : s]
    return acc * x.dtype.type(1.0 / (k * k))


def avgpool_backward(g, h, w, k, s):
    n, c, oh, ow = g.shape
    share = g * g.dtype.type(1.0 / (k * k))
    gx = np.zeros((n, c, h, w), dtype=g.dtype)
    for i in range(k):
        for j in range(k):
            gx[:, :, i : i + oh * s : s, j : j + ow * s : s] += share
    return gx


def dwconv_forward(x, w, ph, pw):
    """Depthwise conv, stride 1: w is [C,1,kh,kw], channel c only sees channel c."""
    n, c, h, wd = x.shape
    kh, kw = w.shape[2], w.shape[3]
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    oh = h + 2 * ph - kh + 1
    ow = wd + 2 * pw - kw + 1
    out = np.zeros((n, c, oh, ow), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            out += xp[:, :, i : i + oh, j : j + ow] * w[None, :, 0, i, j, None, None]
    return out


def dwconv_backward_x(g, w, h, wd, ph, pw):
    n, c, oh, ow = g.shape
    kh, kw = w.shape[2], w.shape[3]
    gxp = np.zeros((n, c, h + 2 * ph, wd + 2 * pw), dtype=g.dtype)
    for i in range(kh):
        for j in range(kw):
            gxp[:, :, i : i + oh, j : j + ow] += g * w[None, :, 0, i, j, None, None]
    return np.ascontiguousarray(gxp[:, :, ph : ph + h, pw : pw + wd])
