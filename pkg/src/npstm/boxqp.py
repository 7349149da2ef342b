"""Box-constrained convex QP: minimize ``0.5 a'Ha - f'a`` s.t. ``0 <= a <= c``.

Solved by cyclic coordinate descent (see :mod:`npstm.kernels` for the inner
loop).  Each coordinate step is an exact one-dimensional minimization
followed by clipping, so the objective never increases and the iterate is
always feasible.
"""
from dataclasses import dataclass

import numpy as np

from . import kernels


@dataclass
class BoxQp:
    H: np.ndarray
    f: np.ndarray
    c: float

    def __post_init__(self):
        self.H = np.ascontiguousarray(self.H, dtype=np.float64)
        self.f = np.ascontiguousarray(np.ravel(self.f), dtype=np.float64)
        self.c = float(self.c)
        m = self.f.shape[0]
        if m < 1 or self.H.shape != (m, m):
            raise ValueError(f"H must be {m}x{m}, got {self.H.shape}")
        if not (np.all(np.isfinite(self.H)) and np.all(np.isfinite(self.f))):
            raise ValueError("H and f must be finite")
        if not (self.c > 0 and np.isfinite(self.c)):
            raise ValueError(f"upper bound c must be positive, got {self.c}")
        if np.linalg.norm(self.H - self.H.T) > 1e-10 * max(np.linalg.norm(self.H), 1e-300):
            raise ValueError("H must be symmetric")

    @property
    def size(self):
        return self.f.shape[0]

    def objective(self, alpha):
        alpha = np.asarray(alpha, dtype=np.float64)
        return float(0.5 * alpha @ (self.H @ alpha) - self.f @ alpha)


@dataclass
class QpSolution:
    alpha: np.ndarray
    iterations: int
    kkt_residual: float
    converged: bool
    objective: float


def kkt_residual(qp, alpha):
    """Largest violation of the box-QP optimality conditions at ``alpha``.

    With ``g = H alpha - f``: ``|g_i|`` on free coordinates, ``max(0, -g_i)``
    at the lower bound and ``max(0, g_i)`` at the upper bound.  ``alpha`` is
    clipped to the box first.
    """
    alpha = np.clip(np.asarray(alpha, dtype=np.float64), 0.0, qp.c)
    g = qp.H @ alpha - qp.f
    return float(kernels.kkt_violation(np.ascontiguousarray(alpha), g, qp.c))


def default_max_sweeps(m):
    return 10 * m + 1000


def _active_set_finish(qp, alpha, tol, max_iter):
    """Primal active-set refinement started from a feasible ``alpha``.

    The working set holds coordinates pinned at a bound.  On the remaining
    free block the min-norm Newton correction ``H_FF d = -g_F`` is taken by
    least squares, so a singular ``H_FF`` is fine; if that system is
    inconsistent the objective is unbounded below along the residual, which
    lies in the null space of ``H_FF``, and that ray is followed instead.
    Steps stop at the first bound crossed, which joins the working set.  At
    a face minimizer the bound coordinate with the worst multiplier is
    released.  Every accepted step lowers the objective.
    """
    alpha = alpha.copy()
    c = qp.c
    pinned = (alpha <= 0.0) | (alpha >= c)
    value = qp.objective(alpha)
    for _ in range(max_iter):
        g = qp.H @ alpha - qp.f
        free = ~pinned
        if free.any() and np.max(np.abs(g[free])) > 0.5 * tol:
            F = np.flatnonzero(free)
            H_ff = qp.H[np.ix_(F, F)]
            d = np.linalg.lstsq(H_ff, -g[F], rcond=None)[0]
            residual = H_ff @ d + g[F]
            ray = np.linalg.norm(residual) > 1e-9 * max(np.linalg.norm(g[F]), 1e-300)
            if ray:
                d = -residual
            with np.errstate(divide="ignore", invalid="ignore"):
                limits = np.where(d > 0, (c - alpha[F]) / d,
                                  np.where(d < 0, -alpha[F] / d, np.inf))
            step = float(limits.min())
            if not ray:
                step = min(step, 1.0)
            if not np.isfinite(step) or step <= 0.0:
                break
            trial = alpha.copy()
            trial[F] = np.clip(alpha[F] + step * d, 0.0, c)
            blocked = step < 1.0 or ray
            if blocked:
                hit = F[int(np.argmin(limits))]
                trial[hit] = c if d[F == hit][0] > 0 else 0.0
                pinned[hit] = True
            trial_value = qp.objective(trial)
            if trial_value > value:
                break
            alpha, value = trial, trial_value
            continue
        # face minimizer reached: release the worst bound multiplier
        violation = np.where(alpha <= 0.0, -g, g)
        violation[free] = -np.inf
        worst = int(np.argmax(violation))
        if violation[worst] <= tol:
            break
        pinned[worst] = False
    return np.ascontiguousarray(alpha)


def solve(qp, tol=1e-8, max_sweeps=None, alpha0=None):
    """Minimize ``qp`` to a KKT residual of ``tol``.

    ``alpha0`` warm-starts the iteration (it is clipped to the box).  Sweeps
    run in rounds of at most ``m + 10``; each round is followed by an
    active-set refinement, which removes the slow tail that
    coordinate descent shows on rank-deficient ``H``.  If the residual
    target is not met within ``max_sweeps`` full sweeps, the last iterate is
    returned with ``converged=False``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    m = qp.size
    if max_sweeps is None:
        max_sweeps = default_max_sweeps(m)
    if alpha0 is None:
        alpha = np.zeros(m)
    else:
        alpha = np.clip(np.array(alpha0, dtype=np.float64).ravel(), 0.0, qp.c)
        if alpha.shape != (m,):
            raise ValueError(f"alpha0 must have length {m}")
    alpha = np.ascontiguousarray(alpha)

    done = 0
    chunk = m + 10
    while True:
        # fresh gradient each round so incremental drift cannot fake convergence
        g = np.ascontiguousarray(qp.H @ alpha - qp.f)
        kkt = kernels.kkt_violation(alpha, g, qp.c)
        if kkt <= tol or done >= max_sweeps:
            break
        sweeps, _ = kernels.cd_sweeps(qp.H, qp.f, qp.c, alpha, g, tol,
                                      min(chunk, max_sweeps - done))
        done += sweeps
        alpha = _active_set_finish(qp, alpha, tol, 3 * m + 10)
        if sweeps == 0:
            break
    return QpSolution(alpha=alpha, iterations=done, kkt_residual=float(kkt),
                      converged=bool(kkt <= tol), objective=qp.objective(alpha))
