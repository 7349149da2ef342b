"""Pure-Python reference kernels.

These mirror ``_kernels.pyx`` operation for operation so that the compiled
and interpreted backends round identically.  Both operate in place on
float64 arrays owned by the caller.
"""
import math


def kkt_violation(alpha, g, c):
    """Largest KKT violation of a box-QP iterate with gradient ``g``."""
    worst = 0.0
    for i in range(alpha.shape[0]):
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


def cd_sweeps(H, f, c, alpha, g, tol, max_sweeps):
    """Cyclic coordinate descent on ``0.5 a'Ha - f'a`` over ``[0, c]^m``.

    ``alpha`` and its gradient ``g = H alpha - f`` are updated in place.
    Returns ``(sweeps_done, kkt)`` where ``kkt`` is the violation after the
    last sweep; stops early once it drops to ``tol``.
    """
    m = alpha.shape[0]
    dmax = 0.0
    for i in range(m):
        if H[i, i] > dmax:
            dmax = H[i, i]
    thresh = 1e-12 * dmax

    kkt = kkt_violation(alpha, g, c)
    sweeps = 0
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
                g += delta * H[i]
        sweeps += 1
        kkt = kkt_violation(alpha, g, c)
    return sweeps, kkt


def jacobi_eigh(A, Q, tol, max_sweeps):
    """Cyclic Jacobi diagonalisation of symmetric ``A`` (in place).

    On return ``A`` is (nearly) diagonal and ``Q`` holds the accumulated
    rotations, so that ``A_in = Q diag(A) Q'``.  Returns the sweep count.
    """
    n = A.shape[0]
    sweeps = 0
    while sweeps < max_sweeps:
        off = 0.0
        for p in range(n):
            for q in range(n):
                if p != q:
                    off += A[p, q] * A[p, q]
        if math.sqrt(off) <= tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                if theta >= 0.0:
                    t = 1.0 / (theta + math.sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (-theta + math.sqrt(theta * theta + 1.0))
                cs = 1.0 / math.sqrt(t * t + 1.0)
                sn = t * cs
                colp = A[:, p].copy()
                colq = A[:, q].copy()
                A[:, p] = cs * colp - sn * colq
                A[:, q] = sn * colp + cs * colq
                rowp = A[p, :].copy()
                rowq = A[q, :].copy()
                A[p, :] = cs * rowp - sn * rowq
                A[q, :] = sn * rowp + cs * rowq
                A[p, q] = 0.0
                A[q, p] = 0.0
                qp = Q[:, p].copy()
                qq = Q[:, q].copy()
                Q[:, p] = cs * qp - sn * qq
                Q[:, q] = sn * qp + cs * qq
        sweeps += 1
    return sweeps


__all__ = ["cd_sweeps", "jacobi_eigh", "kkt_violation"]
