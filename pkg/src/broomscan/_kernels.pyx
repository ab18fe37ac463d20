# cython: language_level=3
"""Compiled hot kernels; see _kernels_py.py for the reference semantics."""
import numpy as np

from libc.math cimport exp, floor, fabs


cdef inline double _sigmoid(double z) noexcept nogil:
    cdef double e = exp(-fabs(z))
    return (1.0 if z >= 0 else e) / (1.0 + e)


cdef inline double _tanh(double x) noexcept nogil:
    # exp-based so the loop vectorizes through libmvec; abs error ~1e-16
    cdef double e = exp(-2.0 * fabs(x))
    cdef double t = (1.0 - e) / (1.0 + e)
    return t if x >= 0 else -t


def sigmoid(z):
    zz = np.ascontiguousarray(z, dtype=np.float64)
    out = np.empty_like(zz)
    cdef double[::1] src = zz.reshape(-1)
    cdef double[::1] dst = out.reshape(-1)
    cdef Py_ssize_t k
    for k in range(src.shape[0]):
        dst[k] = _sigmoid(src[k])
    return out


def lstm_gates_forward(z, c_prev):
    z = np.ascontiguousarray(z, dtype=np.float64)
    c_prev = np.ascontiguousarray(c_prev, dtype=np.float64)
    cdef Py_ssize_t B = c_prev.shape[0]
    cdef Py_ssize_t n = c_prev.shape[1]
    gates = np.empty((B, 4 * n), dtype=np.float64)
    c = np.empty((B, n), dtype=np.float64)
    tanh_c = np.empty((B, n), dtype=np.float64)
    h = np.empty((B, n), dtype=np.float64)
    cdef double[:, ::1] zv = z
    cdef double[:, ::1] cp = c_prev
    cdef double[:, ::1] gv = gates
    cdef double[:, ::1] cv = c
    cdef double[:, ::1] tv = tanh_c
    cdef double[:, ::1] hv = h
    cdef Py_ssize_t b, j
    cdef double ig, fg, gg, og, cc, tc
    with nogil:
        for b in range(B):
            for j in range(n):
                ig = _sigmoid(zv[b, j])
                fg = _sigmoid(zv[b, n + j])
                gg = _tanh(zv[b, 2 * n + j])
                og = _sigmoid(zv[b, 3 * n + j])
                gv[b, j] = ig
                gv[b, n + j] = fg
                gv[b, 2 * n + j] = gg
                gv[b, 3 * n + j] = og
                cc = fg * cp[b, j] + ig * gg
                tc = _tanh(cc)
                cv[b, j] = cc
                tv[b, j] = tc
                hv[b, j] = og * tc
    return gates, c, tanh_c, h


def lstm_gates_backward(dh, dc_next, gates, c_prev, tanh_c):
    dh = np.ascontiguousarray(dh, dtype=np.float64)
    dc_next = np.ascontiguousarray(dc_next, dtype=np.float64)
    gates = np.ascontiguousarray(gates, dtype=np.float64)
    c_prev = np.ascontiguousarray(c_prev, dtype=np.float64)
    tanh_c = np.ascontiguousarray(tanh_c, dtype=np.float64)
    cdef Py_ssize_t B = c_prev.shape[0]
    cdef Py_ssize_t n = c_prev.shape[1]
    dz = np.empty((B, 4 * n), dtype=np.float64)
    dc_prev = np.empty((B, n), dtype=np.float64)
    cdef double[:, ::1] dhv = dh
    cdef double[:, ::1] dcn = dc_next
    cdef double[:, ::1] gv = gates
    cdef double[:, ::1] cp = c_prev
    cdef double[:, ::1] tv = tanh_c
    cdef double[:, ::1] dzv = dz
    cdef double[:, ::1] dcp = dc_prev
    cdef Py_ssize_t b, j
    cdef double ig, fg, gg, og, tc, dc, d_h
    with nogil:
        for b in range(B):
            for j in range(n):
                ig = gv[b, j]
                fg = gv[b, n + j]
                gg = gv[b, 2 * n + j]
                og = gv[b, 3 * n + j]
                tc = tv[b, j]
                d_h = dhv[b, j]
                dc = dcn[b, j] + d_h * og * (1.0 - tc * tc)
                dzv[b, j] = dc * gg * (ig * (1.0 - ig))
                dzv[b, n + j] = dc * cp[b, j] * (fg * (1.0 - fg))
                dzv[b, 2 * n + j] = dc * ig * (1.0 - gg * gg)
                dzv[b, 3 * n + j] = d_h * tc * (og * (1.0 - og))
                dcp[b, j] = dc * fg
    return dz, dc_prev


def histogram_counts(values, double lo, double hi, Py_ssize_t n_bins):
    v = np.ascontiguousarray(values, dtype=np.float64).reshape(-1)
    counts = np.zeros(n_bins, dtype=np.int64)
    cdef double[::1] vv = v
    cdef long long[::1] cv = counts
    cdef double width = hi - lo
    cdef double x
    cdef Py_ssize_t k, idx
    with nogil:
        for k in range(vv.shape[0]):
            x = vv[k]
            if x < lo:
                x = lo
            elif x > hi:
                x = hi
            idx = <Py_ssize_t>floor((x - lo) / width * n_bins)
            if idx >= n_bins:
                idx = n_bins - 1
            cv[idx] += 1
    return counts
