# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled LSTM recurrence. Same contract as ``_lstm_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, expf
from scipy.linalg.cython_blas cimport sgemm, dgemm

ctypedef fused real:
    float
    double

cnp.import_array()


# exp-based forms: libm exp is several times cheaper than tanh and overflows
# to the correct limits (exp -> inf gives 0 or -1)
cdef inline real _sigmoid(real x) noexcept nogil:
    if real is float:
        return 1.0 / (1.0 + expf(-x))
    else:
        return 1.0 / (1.0 + exp(-x))


cdef inline real _tanh(real x) noexcept nogil:
    if real is float:
        return 2.0 / (1.0 + expf(-2.0 * x)) - 1.0
    else:
        return 2.0 / (1.0 + exp(-2.0 * x)) - 1.0


cdef inline void _gemm(char *ta, char *tb, int m, int n, int k, real *a, int lda,
                       real *b, int ldb, real beta, real *c, int ldc) noexcept nogil:
    # column-major BLAS call with alpha = 1
    cdef real one = 1.0
    if real is float:
        sgemm(ta, tb, &m, &n, &k, &one, a, &lda, b, &ldb, &beta, c, &ldc)
    else:
        dgemm(ta, tb, &m, &n, &k, &one, a, &lda, b, &ldb, &beta, c, &ldc)


def _forward(real[:, :, ::1] xp, real[:, ::1] w_h, long[::1] lengths, bint reverse,
             real[:, :, ::1] h, real[:, :, ::1] c, real[:, :, ::1] gates, real[:, ::1] zero):
    cdef int B = xp.shape[0], T = xp.shape[1], H4 = xp.shape[2]
    cdef int H = H4 // 4
    cdef int s, t, tp, b, j
    cdef real iv, fv, gv, ov, cp, ct
    cdef real *hp
    cdef int ldh
    with nogil:
        for s in range(T):
            t = T - 1 - s if reverse else s
            tp = t + 1 if reverse else t - 1
            for b in range(B):
                for j in range(H4):
                    gates[b, t, j] = xp[b, t, j]
            if 0 <= tp < T:
                hp = &h[0, tp, 0]
                ldh = T * H
            else:
                hp = &zero[0, 0]
                ldh = H
            # gates[:, t, :] += h_prev @ w_h
            _gemm(b"N", b"N", H4, B, H, &w_h[0, 0], H4, hp, ldh, 1.0, &gates[0, t, 0], T * H4)
            for b in range(B):
                if t >= lengths[b]:
                    for j in range(H):
                        h[b, t, j] = 0
                        c[b, t, j] = 0
                    for j in range(H4):
                        gates[b, t, j] = 0
                    continue
                for j in range(H):
                    iv = _sigmoid(gates[b, t, j])
                    fv = _sigmoid(gates[b, t, H + j])
                    gv = _tanh(gates[b, t, 2 * H + j])
                    ov = _sigmoid(gates[b, t, 3 * H + j])
                    cp = c[b, tp, j] if 0 <= tp < T else 0
                    ct = fv * cp + iv * gv
                    c[b, t, j] = ct
                    h[b, t, j] = ov * _tanh(ct)
                    gates[b, t, j] = iv
                    gates[b, t, H + j] = fv
                    gates[b, t, 2 * H + j] = gv
                    gates[b, t, 3 * H + j] = ov


def _backward(real[:, :, ::1] dh_out, real[:, ::1] w_h, long[::1] lengths, bint reverse,
              real[:, :, ::1] h, real[:, :, ::1] c, real[:, :, ::1] gates,
              real[:, :, ::1] dz, real[:, ::1] dh_next, real[:, ::1] dc_next):
    cdef int B = dh_out.shape[0], T = dh_out.shape[1], H = dh_out.shape[2]
    cdef int H4 = 4 * H
    cdef int s, t, tp, b, j
    cdef real iv, fv, gv, ov, tc, dh, dc, cp
    with nogil:
        for s in range(T):
            t = s if reverse else T - 1 - s
            tp = t + 1 if reverse else t - 1
            for b in range(B):
                if t >= lengths[b]:
                    for j in range(H4):
                        dz[b, t, j] = 0
                    for j in range(H):
                        dc_next[b, j] = 0
                    continue
                for j in range(H):
                    iv = gates[b, t, j]
                    fv = gates[b, t, H + j]
                    gv = gates[b, t, 2 * H + j]
                    ov = gates[b, t, 3 * H + j]
                    cp = c[b, tp, j] if 0 <= tp < T else 0
                    tc = _tanh(c[b, t, j])
                    dh = dh_out[b, t, j] + dh_next[b, j]
                    dc = dc_next[b, j] + dh * ov * (1 - tc * tc)
                    dz[b, t, j] = dc * gv * iv * (1 - iv)
                    dz[b, t, H + j] = dc * cp * fv * (1 - fv)
                    dz[b, t, 2 * H + j] = dc * iv * (1 - gv * gv)
                    dz[b, t, 3 * H + j] = dh * tc * ov * (1 - ov)
                    dc_next[b, j] = dc * fv
            # dh_next = dz[:, t, :] @ w_h.T; invalid rows of dz are zero
            _gemm(b"T", b"N", H, B, H4, &w_h[0, 0], H4, &dz[0, t, 0], T * H4, 0.0, &dh_next[0, 0], H)


def lstm_forward(xp, w_h, lengths, reverse):
    B, T, H4 = xp.shape
    H = H4 // 4
    xp = np.ascontiguousarray(xp)
    w_h = np.ascontiguousarray(w_h, dtype=xp.dtype)
    lengths = np.ascontiguousarray(lengths, dtype=np.int64)
    h = np.zeros((B, T, H), dtype=xp.dtype)
    c = np.zeros((B, T, H), dtype=xp.dtype)
    gates = np.empty((B, T, H4), dtype=xp.dtype)
    zero = np.zeros((max(B, 1), H), dtype=xp.dtype)
    if T and B:
        _forward(xp, w_h, lengths, bool(reverse), h, c, gates, zero)
    return h, c, gates


def lstm_backward(dh_out, w_h, lengths, reverse, h, c, gates):
    B, T, H = dh_out.shape
    dtype = gates.dtype
    dh_out = np.ascontiguousarray(dh_out, dtype=dtype)
    w_h = np.ascontiguousarray(w_h, dtype=dtype)
    lengths = np.ascontiguousarray(lengths, dtype=np.int64)
    dz = np.zeros((B, T, 4 * H), dtype=dtype)
    dh_next = np.zeros((max(B, 1), H), dtype=dtype)
    dc_next = np.zeros((max(B, 1), H), dtype=dtype)
    if T and B:
        _backward(dh_out, w_h, lengths, bool(reverse), np.ascontiguousarray(h),
                  np.ascontiguousarray(c), np.ascontiguousarray(gates), dz, dh_next, dc_next)
    return dz
