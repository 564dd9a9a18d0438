# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled LSTM recurrence kernels; same contract as ``_fallback``.

The recurrent matmul goes through BLAS dgemm, writing straight into the
strided (B, T, 4H) buffer, and the gate nonlinearities run in C loops.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, tanh
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


cdef inline double _sigmoid(double x) nogil:
    cdef double e
    if x >= 0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


def recurrence_forward(double[:, :, ::1] xproj, double[:, ::1] w_h):
    cdef Py_ssize_t B = xproj.shape[0], T = xproj.shape[1], H4 = xproj.shape[2]
    cdef Py_ssize_t H = H4 // 4
    if w_h.shape[0] != H or w_h.shape[1] != H4:
        raise ValueError("w_h shape does not match the projected input")
    hs_arr = np.zeros((B, T, H))
    cs_arr = np.zeros((B, T, H))
    z_arr = np.array(xproj, copy=True)
    cdef double[:, :, ::1] hs = hs_arr
    cdef double[:, :, ::1] cs = cs_arr
    cdef double[:, :, ::1] z = z_arr
    cdef int m = <int>H4, n = <int>B, k = <int>H
    cdef int lda = <int>H4, ldb = <int>(T * H), ldc = <int>(T * H4)
    cdef double one = 1.0
    cdef char nt = b'N'
    cdef Py_ssize_t b, t, j
    cdef double gi, gf, gg, go, c_prev, c
    if B == 0 or T == 0:
        return hs_arr, cs_arr, z_arr
    with nogil:
        for t in range(T):
            if t > 0 and H > 0:
                # z[:, t] += hs[:, t-1] @ w_h  (column-major view: z^T += w_h^T hs^T)
                dgemm(&nt, &nt, &m, &n, &k, &one, &w_h[0, 0], &lda,
                      &hs[0, t - 1, 0], &ldb, &one, &z[0, t, 0], &ldc)
            for b in range(B):
                for j in range(H):
                    gi = _sigmoid(z[b, t, j])
                    gf = _sigmoid(z[b, t, H + j])
                    gg = tanh(z[b, t, 2 * H + j])
                    go = _sigmoid(z[b, t, 3 * H + j])
                    c_prev = cs[b, t - 1, j] if t > 0 else 0.0
                    c = gf * c_prev + gi * gg
                    cs[b, t, j] = c
                    hs[b, t, j] = go * tanh(c)
                    z[b, t, j] = gi
                    z[b, t, H + j] = gf
                    z[b, t, 2 * H + j] = gg
                    z[b, t, 3 * H + j] = go
    return hs_arr, cs_arr, z_arr


def recurrence_backward(double[:, :, ::1] dhs, double[:, :, ::1] gates,
                        double[:, :, ::1] cs, double[:, ::1] w_h):
    cdef Py_ssize_t B = dhs.shape[0], T = dhs.shape[1], H = dhs.shape[2]
    cdef Py_ssize_t H4 = 4 * H
    dz_arr = np.empty((B, T, H4))
    dh_next_arr = np.zeros((B, H))
    dc_next_arr = np.zeros((B, H))
    cdef double[:, :, ::1] dz = dz_arr
    cdef double[:, ::1] dh_next = dh_next_arr
    cdef double[:, ::1] dc_next = dc_next_arr
    cdef int m = <int>H, n = <int>B, k = <int>H4
    cdef int lda = <int>H4, ldb = <int>(T * H4), ldc = <int>H
    cdef double one = 1.0, zero = 0.0
    cdef char tr = b'T', nt = b'N'
    cdef Py_ssize_t b, t, j
    cdef double gi, gf, gg, go, tc, dh, dc, c_prev
    if B == 0 or T == 0:
        return dz_arr
    with nogil:
        for t in range(T - 1, -1, -1):
            for b in range(B):
                for j in range(H):
                    gi = gates[b, t, j]
                    gf = gates[b, t, H + j]
                    gg = gates[b, t, 2 * H + j]
                    go = gates[b, t, 3 * H + j]
                    c_prev = cs[b, t - 1, j] if t > 0 else 0.0
                    tc = tanh(cs[b, t, j])
                    dh = dhs[b, t, j] + dh_next[b, j]
                    dc = dc_next[b, j] + dh * go * (1.0 - tc * tc)
                    dz[b, t, j] = dc * gg * gi * (1.0 - gi)
                    dz[b, t, H + j] = dc * c_prev * gf * (1.0 - gf)
                    dz[b, t, 2 * H + j] = dc * gi * (1.0 - gg * gg)
                    dz[b, t, 3 * H + j] = dh * tc * go * (1.0 - go)
                    dc_next[b, j] = dc * gf
            if H > 0:
                # dh_next = dz[:, t] @ w_h.T  (column-major: dh^T = w_h dz^T)
                dgemm(&tr, &nt, &m, &n, &k, &one, &w_h[0, 0], &lda,
                      &dz[0, t, 0], &ldb, &zero, &dh_next[0, 0], &ldc)
    return dz_arr
