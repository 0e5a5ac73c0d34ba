# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: LSTM sequence recurrence and the fused Adam step.

Contracts mirror kernels_np.py exactly (gate layout [i|f|g|o], xp carries
the input projection plus bias, ragged rows via lengths).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, sqrt, tanh

ctypedef fused real:
    float
    double


cdef inline real _sig(real x) noexcept nogil:
    cdef real e
    if x >= 0:
        return <real> (1.0 / (1.0 + exp(-x)))
    e = <real> exp(x)
    return <real> (e / (1.0 + e))


def lstm_seq_forward(real[:, :, ::1] xp, real[:, ::1] w_hh, cnp.int64_t[::1] lengths):
    cdef Py_ssize_t B = xp.shape[0]
    cdef Py_ssize_t T = xp.shape[1]
    cdef Py_ssize_t H4 = xp.shape[2]
    cdef Py_ssize_t h = H4 // 4

    if real is float:
        dt = np.float32
    else:
        dt = np.float64
    h_seq_arr = np.zeros((B, T, h), dtype=dt)
    c_seq_arr = np.zeros((B, T, h), dtype=dt)
    gates_arr = np.zeros((B, T, H4), dtype=dt)
    h_final_arr = np.zeros((B, h), dtype=dt)
    pre_arr = np.zeros(H4, dtype=dt)

    cdef real[:, :, ::1] h_seq = h_seq_arr
    cdef real[:, :, ::1] c_seq = c_seq_arr
    cdef real[:, :, ::1] gates = gates_arr
    cdef real[:, ::1] h_final = h_final_arr
    cdef real[::1] pre = pre_arr

    cdef Py_ssize_t b, t, j, k, L
    cdef real hk, ig, fg, gg, og, c_new

    with nogil:
        for b in range(B):
            L = lengths[b]
            for t in range(L):
                for j in range(H4):
                    pre[j] = xp[b, t, j]
                if t > 0:
                    for k in range(h):
                        hk = h_seq[b, t - 1, k]
                        for j in range(H4):
                            pre[j] = pre[j] + hk * w_hh[k, j]
                for k in range(h):
                    ig = _sig(pre[k])
                    fg = _sig(pre[h + k])
                    gg = <real> tanh(pre[2 * h + k])
                    og = _sig(pre[3 * h + k])
                    if t > 0:
                        c_new = fg * c_seq[b, t - 1, k] + ig * gg
                    else:
                        c_new = ig * gg
                    c_seq[b, t, k] = c_new
                    h_seq[b, t, k] = og * (<real> tanh(c_new))
                    gates[b, t, k] = ig
                    gates[b, t, h + k] = fg
                    gates[b, t, 2 * h + k] = gg
                    gates[b, t, 3 * h + k] = og
            if L > 0:
                for k in range(h):
                    h_final[b, k] = h_seq[b, L - 1, k]
    return h_seq_arr, c_seq_arr, gates_arr, h_final_arr


def lstm_seq_backward(real[:, ::1] dh_final, real[:, :, ::1] h_seq,
                      real[:, :, ::1] c_seq, real[:, :, ::1] gates,
                      real[:, ::1] w_hh, cnp.int64_t[::1] lengths):
    cdef Py_ssize_t B = h_seq.shape[0]
    cdef Py_ssize_t T = h_seq.shape[1]
    cdef Py_ssize_t h = h_seq.shape[2]
    cdef Py_ssize_t H4 = 4 * h

    if real is float:
        dt = np.float32
    else:
        dt = np.float64
    dxp_arr = np.zeros((B, T, H4), dtype=dt)
    dw_arr = np.zeros((h, H4), dtype=dt)
    dh_arr = np.zeros(h, dtype=dt)
    dc_arr = np.zeros(h, dtype=dt)

    cdef real[:, :, ::1] dxp = dxp_arr
    cdef real[:, ::1] dw = dw_arr
    cdef real[::1] dh = dh_arr
    cdef real[::1] dc = dc_arr

    cdef Py_ssize_t b, t, j, k, L
    cdef real ig, fg, gg, og, tc, do, dct, c_prev, h_prev, acc

    with nogil:
        for b in range(B):
            L = lengths[b]
            if L == 0:
                continue
            for k in range(h):
                dh[k] = dh_final[b, k]
                dc[k] = 0
            for t in range(L - 1, -1, -1):
                for k in range(h):
                    ig = gates[b, t, k]
                    fg = gates[b, t, h + k]
                    gg = gates[b, t, 2 * h + k]
                    og = gates[b, t, 3 * h + k]
                    tc = <real> tanh(c_seq[b, t, k])
                    do = dh[k] * tc
                    dct = dh[k] * og * (1.0 - tc * tc) + dc[k]
                    if t > 0:
                        c_prev = c_seq[b, t - 1, k]
                    else:
                        c_prev = 0
                    dxp[b, t, k] = dct * gg * ig * (1.0 - ig)
                    dxp[b, t, h + k] = dct * c_prev * fg * (1.0 - fg)
                    dxp[b, t, 2 * h + k] = dct * ig * (1.0 - gg * gg)
                    dxp[b, t, 3 * h + k] = do * og * (1.0 - og)
                    dc[k] = dct * fg
                if t > 0:
                    for k in range(h):
                        h_prev = h_seq[b, t - 1, k]
                        if h_prev != 0:
                            for j in range(H4):
                                dw[k, j] = dw[k, j] + h_prev * dxp[b, t, j]
                for k in range(h):
                    acc = 0
                    for j in range(H4):
                        acc = acc + dxp[b, t, j] * w_hh[k, j]
                    dh[k] = acc
    return dxp_arr, dw_arr


def adam_update(real[::1] p, real[::1] g, real[::1] m, real[::1] v,
                long long t, double lr, double beta1, double beta2, double eps):
    cdef Py_ssize_t n = p.shape[0]
    cdef Py_ssize_t j
    cdef double bc1 = 1.0 - beta1**t
    cdef double bc2 = 1.0 - beta2**t
    cdef real b1 = <real> beta1
    cdef real b2 = <real> beta2
    cdef real one_m_b1 = <real> (1.0 - beta1)
    cdef real one_m_b2 = <real> (1.0 - beta2)
    cdef real rlr = <real> lr
    cdef real rbc1 = <real> bc1
    cdef real rbc2 = <real> bc2
    cdef real reps = <real> eps
    cdef real mhat, vhat
    with nogil:
        for j in range(n):
            m[j] = b1 * m[j] + one_m_b1 * g[j]
            v[j] = b2 * v[j] + one_m_b2 * (g[j] * g[j])
            mhat = m[j] / rbc1
            vhat = v[j] / rbc2
            p[j] = p[j] - rlr * mhat / ((<real> sqrt(vhat)) + reps)
