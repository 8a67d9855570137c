# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled spatial kernels: im2col/col2im, pooling, depthwise convolution.

Accumulation order matches lfranet.backend.numpy_kernels bit-for-bit: every
routine loops kernel offsets (i, j) as the outer accumulation axis.  Inner
loops are branch-free; the valid output range per kernel offset is computed
up front.
"""

import numpy as np

cimport cython

ctypedef fused floating:
    float
    double

BACKEND_NAME = "cython"


cdef inline Py_ssize_t _range_lo(Py_ssize_t offset, Py_ssize_t stride) nogil:
    # smallest o >= 0 with o*stride + offset >= 0
    if offset >= 0:
        return 0
    return (-offset + stride - 1) // stride


cdef inline Py_ssize_t _range_hi(Py_ssize_t offset, Py_ssize_t stride,
                                 Py_ssize_t extent, Py_ssize_t limit) nogil:
    # one past the largest o < limit with o*stride + offset <= extent - 1
    cdef Py_ssize_t hi
    if extent - 1 - offset < 0:
        return 0
    hi = (extent - 1 - offset) // stride + 1
    return hi if hi < limit else limit


def im2col(floating[:, :, :, ::1] x, int kh, int kw, int sh, int sw,
           int ph, int pw, int dh, int dw):
    cdef Py_ssize_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t OH = (H + 2 * ph - dh * (kh - 1) - 1) // sh + 1
    cdef Py_ssize_t OW = (W + 2 * pw - dw * (kw - 1) - 1) // sw + 1
    dtype = np.float32 if floating is float else np.float64
    out = np.zeros((N, C * kh * kw, OH * OW), dtype=dtype)
    cdef floating[:, :, ::1] cols = out
    cdef Py_ssize_t n, c, i, j, oh, ow, row, base, ih, iw0
    cdef Py_ssize_t oh_lo, oh_hi, ow_lo, ow_hi
    with nogil:
        for n in range(N):
            for c in range(C):
                for i in range(kh):
                    oh_lo = _range_lo(i * dh - ph, sh)
                    oh_hi = _range_hi(i * dh - ph, sh, H, OH)
                    for j in range(kw):
                        ow_lo = _range_lo(j * dw - pw, sw)
                        ow_hi = _range_hi(j * dw - pw, sw, W, OW)
                        row = (c * kh + i) * kw + j
                        for oh in range(oh_lo, oh_hi):
                            ih = oh * sh - ph + i * dh
                            base = oh * OW
                            iw0 = j * dw - pw + ow_lo * sw
                            for ow in range(ow_lo, ow_hi):
                                cols[n, row, base + ow] = x[n, c, ih, iw0]
                                iw0 += sw
    return out


def col2im(floating[:, :, ::1] cols, Py_ssize_t h, Py_ssize_t w, int kh, int kw,
           int sh, int sw, int ph, int pw, int dh, int dw):
    cdef Py_ssize_t N = cols.shape[0], C = cols.shape[1] // (kh * kw)
    cdef Py_ssize_t OH = (h + 2 * ph - dh * (kh - 1) - 1) // sh + 1
    cdef Py_ssize_t OW = (w + 2 * pw - dw * (kw - 1) - 1) // sw + 1
    dtype = np.float32 if floating is float else np.float64
    out = np.zeros((N, C, h, w), dtype=dtype)
    cdef floating[:, :, :, ::1] x = out
    cdef Py_ssize_t n, c, i, j, oh, ow, row, base, ih, iw0
    cdef Py_ssize_t oh_lo, oh_hi, ow_lo, ow_hi
    with nogil:
        for n in range(N):
            for c in range(C):
                for i in range(kh):
                    oh_lo = _range_lo(i * dh - ph, sh)
                    oh_hi = _range_hi(i * dh - ph, sh, h, OH)
                    for j in range(kw):
                        ow_lo = _range_lo(j * dw - pw, sw)
                        ow_hi = _range_hi(j * dw - pw, sw, w, OW)
                        row = (c * kh + i) * kw + j
                        for oh in range(oh_lo, oh_hi):
                            ih = oh * sh - ph + i * dh
                            base = oh * OW
                            iw0 = j * dw - pw + ow_lo * sw
                            for ow in range(ow_lo, ow_hi):
                                x[n, c, ih, iw0] += cols[n, row, base + ow]
                                iw0 += sw
    return out


def maxpool_forward(floating[:, :, :, ::1] x, int k, int s):
    cdef Py_ssize_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t OH = (H - k) // s + 1
    cdef Py_ssize_t OW = (W - k) // s + 1
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.empty((N, C, OH, OW), dtype=dtype)
    idx_arr = np.empty((N, C, OH, OW), dtype=np.int64)
    cdef floating[:, :, :, ::1] out = out_arr
    cdef long long[:, :, :, ::1] idx = idx_arr
    cdef Py_ssize_t n, c, oh, ow, i, j, h0, w0
    cdef floating best, v
    cdef long long bi
    with nogil:
        for n in range(N):
            for c in range(C):
                for oh in range(OH):
                    for ow in range(OW):
                        h0 = oh * s
                        w0 = ow * s
                        best = x[n, c, h0, w0]
                        bi = h0 * W + w0
                        for i in range(k):
                            for j in range(k):
                                v = x[n, c, h0 + i, w0 + j]
                                if v > best:
                                    best = v
                                    bi = (h0 + i) * W + (w0 + j)
                        out[n, c, oh, ow] = best
                        idx[n, c, oh, ow] = bi
    return out_arr, idx_arr


def maxpool_backward(floating[:, :, :, ::1] g, long long[:, :, :, ::1] idx,
                     Py_ssize_t h, Py_ssize_t w):
    cdef Py_ssize_t N = g.shape[0], C = g.shape[1], OH = g.shape[2], OW = g.shape[3]
    dtype = np.float32 if floating is float else np.float64
    out = np.zeros((N, C, h * w), dtype=dtype)
    cdef floating[:, :, ::1] gx = out
    cdef Py_ssize_t n, c, oh, ow
    with nogil:
        for n in range(N):
            for c in range(C):
                for oh in range(OH):
                    for ow in range(OW):
                        gx[n, c, idx[n, c, oh, ow]] += g[n, c, oh, ow]
    return out.reshape(N, C, h, w)


def avgpool_forward(floating[:, :, :, ::1] x, int k, int s):
    cdef Py_ssize_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t OH = (H - k) // s + 1
    cdef Py_ssize_t OW = (W - k) // s + 1
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.zeros((N, C, OH, OW), dtype=dtype)
    cdef floating[:, :, :, ::1] out = out_arr
    cdef floating inv = <floating> (1.0 / (k * k))
    cdef Py_ssize_t n, c, oh, ow, i, j
    with nogil:
        for n in range(N):
            for c in range(C):
                for i in range(k):
                    for j in range(k):
                        for oh in range(OH):
                            for ow in range(OW):
                                out[n, c, oh, ow] += x[n, c, oh * s + i, ow * s + j]
    out_arr *= inv
    return out_arr


def avgpool_backward(floating[:, :, :, ::1] g, Py_ssize_t h, Py_ssize_t w, int k, int s):
    cdef Py_ssize_t N = g.shape[0], C = g.shape[1], OH = g.shape[2], OW = g.shape[3]
    dtype = np.float32 if floating is float else np.float64
    share_arr = np.asarray(g) * dtype(1.0 / (k * k))
    out = np.zeros((N, C, h, w), dtype=dtype)
    cdef floating[:, :, :, ::1] gx = out
    cdef floating[:, :, :, ::1] share = share_arr
    cdef Py_ssize_t n, c, oh, ow, i, j
    with nogil:
        for n in range(N):
            for c in range(C):
                for i in range(k):
                    for j in range(k):
                        for oh in range(OH):
                            for ow in range(OW):
                                gx[n, c, oh * s + i, ow * s + j] += share[n, c, oh, ow]
    return out


def dwconv_forward(floating[:, :, :, ::1] x, floating[:, :, :, ::1] w, int ph, int pw):
    cdef Py_ssize_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t KH = w.shape[2], KW = w.shape[3]
    cdef Py_ssize_t OH = H + 2 * ph - KH + 1
    cdef Py_ssize_t OW = W + 2 * pw - KW + 1
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.zeros((N, C, OH, OW), dtype=dtype)
    cdef floating[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t n, c, i, j, oh, ow, ih, iw0
    cdef Py_ssize_t oh_lo, oh_hi, ow_lo, ow_hi
    cdef floating wv
    with nogil:
        for n in range(N):
            for c in range(C):
                for i in range(KH):
                    oh_lo = _range_lo(i - ph, 1)
                    oh_hi = _range_hi(i - ph, 1, H, OH)
                    for j in range(KW):
                        ow_lo = _range_lo(j - pw, 1)
                        ow_hi = _range_hi(j - pw, 1, W, OW)
                        wv = w[c, 0, i, j]
                        for oh in range(oh_lo, oh_hi):
                            ih = oh - ph + i
                            iw0 = j - pw + ow_lo
                            for ow in range(ow_lo, ow_hi):
                                out[n, c, oh, ow] += x[n, c, ih, iw0] * wv
                                iw0 += 1
    return out_arr


def dwconv_backward_x(floating[:, :, :, ::1] g, floating[:, :, :, ::1] w,
                      Py_ssize_t h, Py_ssize_t wd, int ph, int pw):
    cdef Py_ssize_t N = g.shape[0], C = g.shape[1], OH = g.shape[2], OW = g.shape[3]
    cdef Py_ssize_t KH = w.shape[2], KW = w.shape[3]
    dtype = np.float32 if floating is float else np.float64
    out = np.zeros((N, C, h, wd), dtype=dtype)
    cdef floating[:, :, :, ::1] gx = out
    cdef Py_ssize_t n, c, i, j, oh, ow, ih, iw0
    cdef Py_ssize_t oh_lo, oh_hi, ow_lo, ow_hi
    cdef floating wv
    with nogil:
        for n in range(N):
            for c in range(C):
                for i in range(KH):
                    oh_lo = _range_lo(i - ph, 1)
                    oh_hi = _range_hi(i - ph, 1, h, OH)
                    for j in range(KW):
                        ow_lo = _range_lo(j - pw, 1)
                        ow_hi = _range_hi(j - pw, 1, wd, OW)
                        wv = w[c, 0, i, j]
                        for oh in range(oh_lo, oh_hi):
                            ih = oh - ph + i
                            iw0 = j - pw + ow_lo
                            for ow in range(ow_lo, ow_hi):
                                gx[n, c, ih, iw0] += g[n, c, oh, ow] * wv
                                iw0 += 1
    return out
