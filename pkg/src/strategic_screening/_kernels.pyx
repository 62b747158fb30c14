# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled min-plus transition between two stages of the grid oracle."""

import numpy as np

from libc.math cimport fabs, sqrt, INFINITY


cdef inline double _leg(const double[:, ::1] Y, Py_ssize_t i,
                        const double[:, ::1] Z, Py_ssize_t j,
                        Py_ssize_t d, int code, const double[:, ::1] A) noexcept nogil:
    cdef Py_ssize_t a, c
    cdef double s = 0.0, t, u
    if code == 0:
        for a in range(d):
            s += fabs(Z[j, a] - Y[i, a])
        return s
    if code == 1:
        for a in range(d):
            t = Z[j, a] - Y[i, a]
            s += t * t
        return sqrt(s)
    if code == 2:
        for a in range(d):
            t = fabs(Z[j, a] - Y[i, a])
            if t > s:
                s = t
        return s
    for a in range(d):
        t = Z[j, a] - Y[i, a]
        u = 0.0
        for c in range(d):
            u += A[a, c] * (Z[j, c] - Y[i, c])
        s += t * u
    return s


def minplus_transition(const double[::1] v_prev, const double[:, ::1] Y,
                       const double[:, ::1] Z, int norm_code, const double[:, ::1] A):
    """``out[j] = min_i v_prev[i] + c(Y[i], Z[j])`` and its argmin.

    ``v_prev`` must be sorted ascending: leg costs are nonnegative, so the
    scan over ``i`` stops as soon as ``v_prev[i]`` reaches the best value.
    """
    cdef Py_ssize_t n = Y.shape[0], m = Z.shape[0], d = Y.shape[1]
    cdef Py_ssize_t i, j, bi
    cdef double best, val
    out = np.empty(m, dtype=np.float64)
    arg = np.empty(m, dtype=np.intp)
    cdef double[::1] out_v = out
    cdef Py_ssize_t[::1] arg_v = arg
    with nogil:
        for j in range(m):
            best = INFINITY
            bi = -1
            for i in range(n):
                if v_prev[i] >= best:
                    break
                val = v_prev[i] + _leg(Y, i, Z, j, d, norm_code, A)
                if val < best:
                    best = val
                    bi = i
            out_v[j] = best
            arg_v[j] = bi
    return out, arg
