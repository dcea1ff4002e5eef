# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops for threshold search and the varimax criterion."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()


cdef inline double _shrunk_l1(const double[::1] a, double t) noexcept nogil:
    # Four independent accumulators keep the add pipeline full; the
    # conditional moves avoid unpredictable branches.
    cdef Py_ssize_t i, n = a.shape[0], m = n - n % 4
    cdef double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0, d0, d1, d2, d3
    for i in range(0, m, 4):
        d0 = a[i] - t
        d1 = a[i + 1] - t
        d2 = a[i + 2] - t
        d3 = a[i + 3] - t
        s0 += d0 if d0 > 0.0 else 0.0
        s1 += d1 if d1 > 0.0 else 0.0
        s2 += d2 if d2 > 0.0 else 0.0
        s3 += d3 if d3 > 0.0 else 0.0
    for i in range(m, n):
        d0 = a[i] - t
        s0 += d0 if d0 > 0.0 else 0.0
    return (s0 + s1) + (s2 + s3)


def l1_bisect(const double[::1] a, double gamma, double eps, int max_steps):
    """Bisect on [0, max(a)] for the threshold whose shrunk l1 norm hits gamma.

    ``a`` holds absolute values. Returns ``(t, l1_at_t, steps)``.
    """
    cdef Py_ssize_t i
    cdef double lo = 0.0, hi = 0.0, mid = 0.0, val = 0.0
    cdef double tol = eps * (gamma if gamma > 1.0 else 1.0)
    cdef int steps = 0
    with nogil:
        for i in range(a.shape[0]):
            if a[i] > hi:
                hi = a[i]
        while steps < max_steps:
            mid = 0.5 * (lo + hi)
            val = _shrunk_l1(a, mid)
            steps += 1
            if fabs(val - gamma) <= tol or mid <= lo or mid >= hi:
                break
            if val > gamma:
                lo = mid
            else:
                hi = mid
    return mid, val, steps


def varimax_value_grad(const double[:, ::1] L):
    """Varimax criterion of ``L`` (p x k) and its gradient."""
    cdef Py_ssize_t p = L.shape[0], k = L.shape[1], i, j
    cdef double inv_p = 1.0 / p, value = 0.0, x, x2
    cdef cnp.ndarray[cnp.float64_t, ndim=2] grad = np.empty((p, k), dtype=np.float64)
    cdef double[:, ::1] g = grad
    cdef double[::1] s2 = np.zeros(k, dtype=np.float64)
    cdef double[::1] s4 = np.zeros(k, dtype=np.float64)
    with nogil:
        for i in range(p):
            for j in range(k):
                x2 = L[i, j] * L[i, j]
                s2[j] += x2
                s4[j] += x2 * x2
        for j in range(k):
            value += inv_p * s4[j] - inv_p * inv_p * s2[j] * s2[j]
        for i in range(p):
            for j in range(k):
                x = L[i, j]
                g[i, j] = 4.0 * inv_p * x * (x * x - inv_p * s2[j])
    return value, grad
