# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops; see ``_fallback.py`` for the reference semantics."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, sin, log1p, copysign, isfinite

cnp.import_array()

DEF GRAD_QUADRATIC = 0
DEF GRAD_ZIGZAG = 1
DEF POLICY_ZERO = 0
DEF POLICY_PLUS = 1
DEF POLICY_MINUS = 2
DEF POLICY_SPHERE = 3

cdef double DIVERGENCE_RADIUS = 1e12


def rescaled_partial_sums(summands, double rho2):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] s = np.ascontiguousarray(summands, dtype=np.float64)
    cdef Py_ssize_t n = s.shape[0], i
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n)
    cdef double acc = 0.0
    for i in range(n):
        acc = rho2 * acc + s[i]
        out[i] = acc
    return out


def jacobi_eigvalsh(a_in, double tol=1e-12, int max_sweeps=64):
    cdef double[:, ::1] a = np.array(a_in, dtype=np.float64, order="C")
    cdef Py_ssize_t n = a.shape[0], p, q, k
    cdef int sweep
    cdef double off, diag, apq, theta, t, c, s, x1, x2
    for sweep in range(max_sweeps):
        off = 0.0
        diag = 0.0
        for p in range(n):
            diag += a[p, p] * a[p, p]
            for q in range(p + 1, n):
                off += a[p, q] * a[p, q]
        if off <= tol * tol * (diag if diag > 1e-300 else 1e-300):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = copysign(1.0, theta) / (fabs(theta) + sqrt(theta * theta + 1.0))
                c = 1.0 / sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    x1 = a[k, p]
                    x2 = a[k, q]
                    a[k, p] = c * x1 - s * x2
                    a[k, q] = s * x1 + c * x2
                for k in range(n):
                    x1 = a[p, k]
                    x2 = a[q, k]
                    a[p, k] = c * x1 - s * x2
                    a[q, k] = s * x1 + c * x2
    out = np.empty(n)
    for p in range(n):
        out[p] = a[p, p]
    out.sort()
    return out


cdef inline Py_ssize_t _upper(double[::1] breaks, double y) nogil:
    # number of breakpoints <= y
    cdef Py_ssize_t lo = 0, hi = breaks.shape[0], mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if breaks[mid] <= y:
            lo = mid + 1
        else:
            hi = mid
    return lo


cdef inline double _grad_1d(int kind, double y, double[::1] params, double[::1] breaks,
                            double[::1] slopes, double[::1] values) nogil:
    cdef Py_ssize_t j
    cdef double gain
    if kind == GRAD_QUADRATIC:
        return params[0] * y
    if kind == GRAD_ZIGZAG:
        j = _upper(breaks, y)
        if j < breaks.shape[0] and (j == 0 or y < 0):
            return values[j] + slopes[j] * (y - breaks[j])
        return values[j - 1] + slopes[j] * (y - breaks[j - 1])
    gain = 0.5 * (params[1] + params[0]) + 0.5 * (params[1] - params[0]) * sin(params[2] * log1p(y * y))
    return y * gain


def gd_run_scalar(int kind, params, breaks, slopes, values, double x0, double xstar,
                  double alpha, int policy, double delta, signs, Py_ssize_t steps, double L):
    cdef double[::1] p_ = np.ascontiguousarray(params, dtype=np.float64)
    cdef double[::1] b_ = np.ascontiguousarray(breaks, dtype=np.float64)
    cdef double[::1] s_ = np.ascontiguousarray(slopes, dtype=np.float64)
    cdef double[::1] v_ = np.ascontiguousarray(values, dtype=np.float64)
    cdef double[::1] sg = np.ascontiguousarray(signs, dtype=np.float64)
    x_arr = np.zeros(steps + 1)
    u_arr = np.zeros(steps + 1)
    e_arr = np.zeros(steps + 1)
    w_arr = np.zeros(steps + 1)
    cdef double[::1] x = x_arr, u = u_arr, e = e_arr, v = w_arr
    cdef double xk = x0, y, g, bound, ek, w
    cdef Py_ssize_t k, n = 0
    with nogil:
        for k in range(steps + 1):
            y = xk - xstar
            if not isfinite(y) or fabs(y) > DIVERGENCE_RADIUS:
                break
            g = _grad_1d(kind, y, p_, b_, s_, v_)
            bound = delta * fabs(g)
            if policy == POLICY_ZERO:
                ek = 0.0
            elif policy == POLICY_PLUS:
                ek = delta * g
            elif policy == POLICY_MINUS:
                ek = -delta * g
            elif policy == POLICY_SPHERE:
                ek = bound * sg[k]
            else:
                w = y - alpha * g
                ek = -bound if w > 0 else bound
            x[k] = xk
            u[k] = g
            e[k] = ek
            if k + 1 <= steps:
                v[k + 1] = L * y - g
            n = k + 1
            xk = xk - alpha * (g + ek)
    return x_arr, u_arr, e_arr, w_arr, n
