# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; arithmetic order matches ``_kernels_py``."""
from libc.math cimport sqrt


cpdef double kkt_violation(const double[::1] alpha, const double[::1] g, double c):
    cdef Py_ssize_t i, m = alpha.shape[0]
    cdef double worst = 0.0, v, a, gi
    for i in range(m):
        a = alpha[i]
        gi = g[i]
        if a <= 0.0:
            v = -gi
        elif a >= c:
            v = gi
        else:
            v = gi if gi >= 0.0 else -gi
        if v > worst:
            worst = v
    return worst


def cd_sweeps(const double[:, ::1] H, const double[::1] f, double c,
              double[::1] alpha, double[::1] g, double tol, long max_sweeps):
    cdef Py_ssize_t i, k, m = alpha.shape[0]
    cdef double dmax = 0.0, thresh, hi, ai, gi, new, delta, kkt
    cdef long sweeps = 0
    for i in range(m):
        if H[i, i] > dmax:
            dmax = H[i, i]
    thresh = 1e-12 * dmax

    kkt = kkt_violation(alpha, g, c)
    with nogil:
        while sweeps < max_sweeps and kkt > tol:
            for i in range(m):
                hi = H[i, i]
                ai = alpha[i]
                gi = g[i]
                if hi > thresh:
                    new = ai - gi / hi
                    if new < 0.0:
                        new = 0.0
                    elif new > c:
                        new = c
                elif gi > 0.0:
                    new = 0.0
                elif gi < 0.0:
                    new = c
                else:
                    new = ai
                delta = new - ai
                if delta != 0.0:
                    alpha[i] = new
                    for k in range(m):
                        g[k] = g[k] + delta * H[i, k]
            sweeps += 1
            kkt = _kkt(alpha, g, c, m)
    return sweeps, kkt


cdef inline double _kkt(double[::1] alpha, double[::1] g, double c,
                        Py_ssize_t m) noexcept nogil:
    cdef Py_ssize_t i
    cdef double worst = 0.0, v, a, gi
    for i in range(m):
        a = alpha[i]
        gi = g[i]
        if a <= 0.0:
            v = -gi
        elif a >= c:
            v = gi
        else:
            v = gi if gi >= 0.0 else -gi
        if v > worst:
            worst = v
    return worst


def jacobi_eigh(double[:, ::1] A, double[:, ::1] Q, double tol, long max_sweeps):
    cdef Py_ssize_t n = A.shape[0], p, q, k
    cdef long sweeps = 0
    cdef double off, apq, theta, t, cs, sn, x, y
    with nogil:
        while sweeps < max_sweeps:
            off = 0.0
            for p in range(n):
                for q in range(n):
                    if p != q:
                        off += A[p, q] * A[p, q]
            if sqrt(off) <= tol:
                break
            for p in range(n - 1):
                for q in range(p + 1, n):
                    apq = A[p, q]
                    if apq == 0.0:
                        continue
                    theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                    if theta >= 0.0:
                        t = 1.0 / (theta + sqrt(theta * theta + 1.0))
                    else:
                        t = -1.0 / (-theta + sqrt(theta * theta + 1.0))
                    cs = 1.0 / sqrt(t * t + 1.0)
                    sn = t * cs
                    for k in range(n):
                        x = A[k, p]
                        y = A[k, q]
                        A[k, p] = cs * x - sn * y
                        A[k, q] = sn * x + cs * y
                    for k in range(n):
                        x = A[p, k]
                        y = A[q, k]
                        A[p, k] = cs * x - sn * y
                        A[q, k] = sn * x + cs * y
                    A[p, q] = 0.0
                    A[q, p] = 0.0
                    for k in range(n):
                        x = Q[k, p]
                        y = Q[k, q]
                        Q[k, p] = cs * x - sn * y
                        Q[k, q] = sn * x + cs * y
            sweeps += 1
    return sweeps
