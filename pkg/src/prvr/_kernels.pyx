# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled loops behind :mod:`prvr.kernels`.

Each function mirrors one in ``_kernels_py``. The indicator, shift and rank
kernels are bit-identical to their fallbacks; ``offset_bias_grad`` agrees up
to summation order.
"""
import numpy as np

cimport numpy as cnp

cnp.import_array()


def window_indicator(const double[::1] scores, double tau_high, double tau_low, Py_ssize_t k):
    cdef Py_ssize_t n = scores.shape[0]
    cdef Py_ssize_t i, j, stop
    cdef bint all_high, all_low
    cdef double s
    out = np.zeros(n, dtype=np.int8)
    cdef signed char[::1] ind = out
    for i in range(n):
        stop = i + k
        if stop > n:
            stop = n
        all_high = True
        all_low = True
        for j in range(i, stop):
            s = scores[j]
            if s < tau_high:
                all_high = False
            if s > tau_low:
                all_low = False
            if not all_high and not all_low:
                break
        if all_high:
            ind[i] = 1
        elif all_low:
            ind[i] = -1
    return out


def apply_indicator(const double[::1] scores, const signed char[::1] ind, double alpha):
    cdef Py_ssize_t n = scores.shape[0]
    cdef Py_ssize_t i
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] res = out
    for i in range(n):
        if ind[i] > 0:
            res[i] = scores[i] + alpha
        elif ind[i] < 0:
            res[i] = scores[i] + (-alpha)
        else:
            res[i] = scores[i] + 0.0
    return out


def offset_bias_matrix(const double[::1] table, Py_ssize_t n, Py_ssize_t rmax):
    cdef Py_ssize_t i, j, off
    out = np.empty((n, n), dtype=np.float64)
    cdef double[:, ::1] res = out
    for i in range(n):
        for j in range(n):
            off = j - i
            if off > rmax:
                off = rmax
            elif off < -rmax:
                off = -rmax
            res[i, j] = table[off + rmax]
    return out


def offset_bias_grad(const double[:, ::1] grad, Py_ssize_t rmax):
    cdef Py_ssize_t n = grad.shape[0]
    cdef Py_ssize_t i, j, off
    out = np.zeros(2 * rmax + 1, dtype=np.float64)
    cdef double[::1] res = out
    for i in range(n):
        for j in range(n):
            off = j - i
            if off > rmax:
                off = rmax
            elif off < -rmax:
                off = -rmax
            res[off + rmax] += grad[i, j]
    return out


def ground_truth_ranks(const double[:, ::1] sim, const long long[::1] truth):
    cdef Py_ssize_t q = sim.shape[0]
    cdef Py_ssize_t n = sim.shape[1]
    cdef Py_ssize_t a, c
    cdef long long t, rank
    cdef double target, s
    out = np.empty(q, dtype=np.int64)
    cdef long long[::1] res = out
    for a in range(q):
        t = truth[a]
        target = sim[a, t]
        rank = 1
        for c in range(n):
            s = sim[a, c]
            if s > target or (s == target and c < t):
                rank += 1
        res[a] = rank
    return out
