"""Compiled hot kernels: conv1d, average pooling, LSTM recurrence.

Entry points, array layouts, and numerical contracts match ``pykern``.
The LSTM recurrence calls BLAS gemm directly (via scipy's exported
bindings) so the sequential time loop runs without interpreter overhead
while the gate matmuls keep BLAS speed.
"""

import numpy as np

from libc.math cimport exp, expf, tanh, tanhf
from scipy.linalg.cython_blas cimport dgemm, sgemm

ctypedef fused real:
    float
    double


cdef inline real _sig(real x) noexcept nogil:
    cdef real e
    if real is float:
        if x >= 0:
            e = expf(-x)
            return <real>(1.0 / (1.0 + e))
        e = expf(x)
        return <real>(e / (1.0 + e))
    else:
        if x >= 0:
            e = exp(-x)
            return <real>(1.0 / (1.0 + e))
        e = exp(x)
        return <real>(e / (1.0 + e))


cdef inline real _th(real x) noexcept nogil:
    if real is float:
        return tanhf(x)
    else:
        return tanh(x)


cdef inline void _gemm(char transa, char transb, int m, int n, int k,
                       real alpha, real *a, int lda, real *b, int ldb,
                       real beta, real *c, int ldc) noexcept nogil:
    if real is float:
        sgemm(&transa, &transb, &m, &n, &k, &alpha, a, &lda, b, &ldb,
              &beta, c, &ldc)
    else:
        dgemm(&transa, &transb, &m, &n, &k, &alpha, a, &lda, b, &ldb,
              &beta, c, &ldc)


# Convolution runs as im2col + one BLAS gemm.  The patch matrix is laid
# out [C*W, B*out_len] so the gather/scatter loops stream contiguously
# over output positions j; for each kernel offset w, the j with
# 0 <= j*stride + w - pad_l < L form one contiguous run (jhi exclusive)
# and everything outside it is padding.

cdef inline Py_ssize_t _jlo(Py_ssize_t w, int pad_l, int stride) noexcept nogil:
    if pad_l <= w:
        return 0
    return (pad_l - w + stride - 1) // stride


cdef inline Py_ssize_t _jhi(Py_ssize_t w, Py_ssize_t L, int pad_l, int stride,
                            Py_ssize_t out_len) noexcept nogil:
    # cdivision truncates toward zero, so guard the empty-run case before
    # dividing a negative numerator.
    cdef Py_ssize_t num = L - 1 + pad_l - w
    cdef Py_ssize_t hi
    if num < 0:
        return 0
    hi = num // stride + 1
    return out_len if hi > out_len else hi


cdef void _im2col(real[:, :, ::1] x, real[:, ::1] cols, Py_ssize_t out_len,
                  int stride, int pad_l) noexcept nogil:
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], L = x.shape[2]
    cdef Py_ssize_t W = cols.shape[0] // C
    cdef Py_ssize_t b, c, w, j, jlo, jhi, off, row
    for c in range(C):
        for w in range(W):
            row = c * W + w
            off = w - pad_l
            jlo = _jlo(w, pad_l, stride)
            if jlo > out_len:
                jlo = out_len
            jhi = _jhi(w, L, pad_l, stride, out_len)
            if jhi < jlo:
                jhi = jlo
            for b in range(B):
                for j in range(jlo):
                    cols[row, b * out_len + j] = 0
                for j in range(jlo, jhi):
                    cols[row, b * out_len + j] = x[b, c, j * stride + off]
                for j in range(jhi, out_len):
                    cols[row, b * out_len + j] = 0


cdef object _scratch(real r, tuple shape):
    if real is float:
        return np.empty(shape, dtype=np.float32)
    return np.empty(shape, dtype=np.float64)


def conv1d_fwd(real[:, :, ::1] x, real[:, :, ::1] kernels, real[::1] bias,
               int stride, int pad_l, int pad_r):
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], L = x.shape[2]
    cdef Py_ssize_t O = kernels.shape[0], W = kernels.shape[2]
    cdef Py_ssize_t out_len = (L + pad_l + pad_r - W) // stride + 1
    cdef Py_ssize_t CW = C * W, BL = B * out_len
    cdef Py_ssize_t b, o, j

    y_np = _scratch(<real>0, (B, O, out_len))
    cols_np = _scratch(<real>0, (CW, BL))
    flat_np = _scratch(<real>0, (O, BL))
    cdef real[:, :, ::1] y = y_np
    cdef real[:, ::1] cols = cols_np
    cdef real[:, ::1] flat = flat_np
    cdef real[:, :, ::1] km = kernels

    with nogil:
        _im2col(x, cols, out_len, stride, pad_l)
        # Row-major flat[O, BL] = kernels[O, CW] @ cols[CW, BL] via the
        # column-major transpose trick.
        if BL > 0:
            _gemm(c'N', c'N', <int>BL, <int>O, <int>CW,
                  <real>1.0, &cols[0, 0], <int>BL,
                  &km[0, 0, 0], <int>CW,
                  <real>0.0, &flat[0, 0], <int>BL)
        for b in range(B):
            for o in range(O):
                for j in range(out_len):
                    y[b, o, j] = flat[o, b * out_len + j] + bias[o]
    return y_np


def conv1d_bwd(real[:, :, ::1] x, real[:, :, ::1] kernels,
               int stride, int pad_l, int pad_r, real[:, :, ::1] gy):
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], L = x.shape[2]
    cdef Py_ssize_t O = kernels.shape[0], W = kernels.shape[2]
    cdef Py_ssize_t out_len = gy.shape[2]
    cdef Py_ssize_t CW = C * W, BL = B * out_len
    cdef Py_ssize_t b, o, j, c, w, jlo, jhi, off, row
    cdef real acc

    if real is float:
        dt = np.float32
    else:
        dt = np.float64
    gx_np = np.zeros((B, C, L), dtype=dt)
    gk_np = np.empty((O, C, W), dtype=dt)
    gb_np = np.empty((O,), dtype=dt)
    cols_np = _scratch(<real>0, (CW, BL))
    gflat_np = _scratch(<real>0, (O, BL))
    gcols_np = _scratch(<real>0, (CW, BL))
    cdef real[:, :, ::1] gx = gx_np
    cdef real[:, :, ::1] gk = gk_np
    cdef real[::1] gb = gb_np
    cdef real[:, ::1] cols = cols_np
    cdef real[:, ::1] gflat = gflat_np
    cdef real[:, ::1] gcols = gcols_np
    cdef real[:, :, ::1] km = kernels

    with nogil:
        for o in range(O):
            acc = 0
            for b in range(B):
                for j in range(out_len):
                    gflat[o, b * out_len + j] = gy[b, o, j]
                    acc = acc + gy[b, o, j]
            gb[o] = acc

        if BL > 0:
            _im2col(x, cols, out_len, stride, pad_l)
            # Row-major gk[O, CW] = gflat[O, BL] @ cols[CW, BL]^T.
            _gemm(c'T', c'N', <int>CW, <int>O, <int>BL,
                  <real>1.0, &cols[0, 0], <int>BL,
                  &gflat[0, 0], <int>BL,
                  <real>0.0, &gk[0, 0, 0], <int>CW)
            # Row-major gcols[CW, BL] = kernels[O, CW]^T @ gflat[O, BL].
            _gemm(c'N', c'T', <int>BL, <int>CW, <int>O,
                  <real>1.0, &gflat[0, 0], <int>BL,
                  &km[0, 0, 0], <int>CW,
                  <real>0.0, &gcols[0, 0], <int>BL)
        else:
            for o in range(O):
                for c in range(C):
                    for w in range(W):
                        gk[o, c, w] = 0

        # col2im: scatter the patch gradients back, skipping padding cells.
        for c in range(C):
            for w in range(W):
                row = c * W + w
                off = w - pad_l
                jlo = _jlo(w, pad_l, stride)
                jhi = _jhi(w, L, pad_l, stride, out_len)
                for b in range(B):
                    for j in range(jlo, jhi):
                        gx[b, c, j * stride + off] = (
                            gx[b, c, j * stride + off] + gcols[row, b * out_len + j])
    return gx_np, gk_np, gb_np


def avgpool_fwd(real[:, :, ::1] x, int window):
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], L = x.shape[2]
    cdef Py_ssize_t out_len = L // window
    cdef Py_ssize_t b, c, j, w
    cdef real acc
    cdef real inv = <real>(1.0 / window)

    if real is float:
        y_np = np.empty((B, C, out_len), dtype=np.float32)
    else:
        y_np = np.empty((B, C, out_len), dtype=np.float64)
    cdef real[:, :, ::1] y = y_np

    with nogil:
        for b in range(B):
            for c in range(C):
                for j in range(out_len):
                    acc = 0
                    for w in range(window):
                        acc = acc + x[b, c, j * window + w]
                    y[b, c, j] = acc * inv
    return y_np


def avgpool_bwd(real[:, :, ::1] gy, int window, int in_length):
    cdef Py_ssize_t B = gy.shape[0], C = gy.shape[1], out_len = gy.shape[2]
    cdef Py_ssize_t b, c, j, w
    cdef real v
    cdef real inv = <real>(1.0 / window)

    if real is float:
        gx_np = np.zeros((B, C, in_length), dtype=np.float32)
    else:
        gx_np = np.zeros((B, C, in_length), dtype=np.float64)
    cdef real[:, :, ::1] gx = gx_np

    with nogil:
        for b in range(B):
            for c in range(C):
                for j in range(out_len):
                    v = gy[b, c, j] * inv
                    for w in range(window):
                        gx[b, c, j * window + w] = v
    return gx_np


def lstm_recurrence_fwd(real[:, :, ::1] pre, real[:, ::1] wh):
    """Gate recurrence over time-major pre-activations [T,B,4H].

    ``pre`` holds x @ Wx + b on entry and is consumed as scratch: the
    recurrent term h @ Wh is accumulated into it step by step. Gate
    blocks are ordered input, forget, cell candidate, output.
    """
    cdef Py_ssize_t T = pre.shape[0], B = pre.shape[1], H4 = pre.shape[2]
    cdef Py_ssize_t H = H4 // 4
    cdef Py_ssize_t t, b, j
    cdef real iv, fv, gv, ov, cp, cv
    cdef int mi = <int>H4, ni = <int>B, ki = <int>H
    cdef int lda = <int>H4, ldb = <int>H, ldc = <int>H4

    if real is float:
        dt = np.float32
    else:
        dt = np.float64
    h_np = np.empty((T, B, H), dtype=dt)
    c_np = np.empty((T, B, H), dtype=dt)
    gates_np = np.empty((T, B, H4), dtype=dt)
    cdef real[:, :, ::1] h_seq = h_np
    cdef real[:, :, ::1] c_seq = c_np
    cdef real[:, :, ::1] gates = gates_np

    with nogil:
        for t in range(T):
            if t > 0:
                # pre[t] += h_seq[t-1] @ wh, via the column-major transpose trick
                _gemm(c'N', c'N', mi, ni, ki, <real>1.0,
                      &wh[0, 0], lda, &h_seq[t - 1, 0, 0], ldb,
                      <real>1.0, &pre[t, 0, 0], ldc)
            for b in range(B):
                for j in range(H):
                    iv = _sig(pre[t, b, j])
                    fv = _sig(pre[t, b, H + j])
                    gv = _th(pre[t, b, 2 * H + j])
                    ov = _sig(pre[t, b, 3 * H + j])
                    cp = c_seq[t - 1, b, j] if t > 0 else <real>0.0
                    cv = fv * cp + iv * gv
                    gates[t, b, j] = iv
                    gates[t, b, H + j] = fv
                    gates[t, b, 2 * H + j] = gv
                    gates[t, b, 3 * H + j] = ov
                    c_seq[t, b, j] = cv
                    h_seq[t, b, j] = ov * _th(cv)
    return h_np, c_np, gates_np


def lstm_recurrence_bwd(real[:, ::1] wh, real[:, :, ::1] h_seq,
                        real[:, :, ::1] c_seq, real[:, :, ::1] gates,
                        real[:, :, ::1] gy):
    cdef Py_ssize_t T = gy.shape[0], B = gy.shape[1], H = gy.shape[2]
    cdef Py_ssize_t H4 = 4 * H
    cdef Py_ssize_t t, b, j
    cdef real iv, fv, gv, ov, cp, tc, dht, dov, dct, div_, dgv, dfv
    cdef int m4 = <int>H4, nH = <int>H, nB = <int>B, k4 = <int>H4, kB = <int>B
    cdef int ld4 = <int>H4, ldH = <int>H

    if real is float:
        dt = np.float32
    else:
        dt = np.float64
    da_np = np.empty((T, B, H4), dtype=dt)
    gwh_np = np.zeros((H, H4), dtype=dt)
    dh_np = np.zeros((B, H), dtype=dt)
    dc_np = np.zeros((B, H), dtype=dt)
    cdef real[:, :, ::1] da = da_np
    cdef real[:, ::1] gwh = gwh_np
    cdef real[:, ::1] dh = dh_np
    cdef real[:, ::1] dc = dc_np

    with nogil:
        for t in range(T - 1, -1, -1):
            for b in range(B):
                for j in range(H):
                    iv = gates[t, b, j]
                    fv = gates[t, b, H + j]
                    gv = gates[t, b, 2 * H + j]
                    ov = gates[t, b, 3 * H + j]
                    cp = c_seq[t - 1, b, j] if t > 0 else <real>0.0
                    tc = _th(c_seq[t, b, j])

                    dht = gy[t, b, j] + dh[b, j]
                    dov = dht * tc
                    dct = dc[b, j] + dht * ov * (<real>1.0 - tc * tc)
                    div_ = dct * gv
                    dgv = dct * iv
                    dfv = dct * cp
                    dc[b, j] = dct * fv

                    da[t, b, j] = div_ * iv * (<real>1.0 - iv)
                    da[t, b, H + j] = dfv * fv * (<real>1.0 - fv)
                    da[t, b, 2 * H + j] = dgv * (<real>1.0 - gv * gv)
                    da[t, b, 3 * H + j] = dov * ov * (<real>1.0 - ov)
            if t > 0:
                # gwh += h_seq[t-1]^T @ da[t]
                _gemm(c'N', c'T', m4, nH, kB, <real>1.0,
                      &da[t, 0, 0], ld4, &h_seq[t - 1, 0, 0], ldH,
                      <real>1.0, &gwh[0, 0], ld4)
            # dh = da[t] @ wh^T
            _gemm(c'T', c'N', nH, nB, k4, <real>1.0,
                  &wh[0, 0], ld4, &da[t, 0, 0], ld4,
                  <real>0.0, &dh[0, 0], ldH)
    return da_np, gwh_np
