"""Large-margin-distribution nonparallel support tensor machine.

Two CP-structured weight tensors are learned.  ``W1`` (problem 1) fits the
positive class, i.e. keeps ``<W1, X_p>`` small, while pushing negatives to
``<W1, Y_q> <= -1``; ``W2`` (problem 2) does the same with the roles of the
classes swapped.  Both objectives also trade off the margin mean and the
margin variance of the opposite class.  A sample is assigned to the class
whose tensorplane is closer.

Training alternates over modes.  With every factor except ``U^(j)`` fixed,
each problem is a convex QP in ``vec(U^(j) A^{1/2})`` with
``A = (U^(-j))' U^(-j)``; it is solved through its box-constrained dual and
the representer expansion ``vec(U~) = V beta``.
"""
from dataclasses import dataclass, field
import struct
import warnings

import numpy as np
from scipy import linalg

from . import boxqp
from .errors import FormatError, NumericalError
from .multilinear import (
    CpFactors,
    cp_distance,
    cp_frobenius,
    cp_inner_many,
    gram_complement,
    khatri_rao_complement,
    spd_cholesky,
    spd_solve,
    sym_inv_sqrt,
)


@dataclass(frozen=True)
class Hyperparams:
    """Model and optimizer settings.

    ``ridge`` is relative: ``ridge * tr(G) / m`` is added to the diagonal of
    every dual system matrix ``G``.
    """

    c1: float = 1.0
    c2: float = 1.0
    c3: float = 1.0
    c4: float = 1.0
    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float = 1.0
    lambda4: float = 1.0
    rank: int = 1
    eps: float = 1e-4
    max_outer: int = 5000
    ridge: float = 1e-8
    seed: int = 0
    qp_tol: float = 1e-8

    def __post_init__(self):
        for name in ("c1", "c2", "c3", "c4"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("lambda1", "lambda2", "lambda3", "lambda4", "ridge"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be nonnegative")
        if int(self.rank) != self.rank or self.rank < 1:
            raise ValueError("rank must be a positive integer")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if int(self.max_outer) != self.max_outer or self.max_outer < 1:
            raise ValueError("max_outer must be a positive integer")
        if not self.qp_tol > 0:
            raise ValueError("qp_tol must be positive")


@dataclass
class TrainingSet:
    """Positive samples ``(m1, *dims)`` and negative samples ``(m2, *dims)``."""

    positives: np.ndarray
    negatives: np.ndarray

    def __post_init__(self):
        self.positives = np.asarray(self.positives, dtype=np.float64)
        self.negatives = np.asarray(self.negatives, dtype=np.float64)
        if self.positives.shape[0] < 1 or self.negatives.shape[0] < 1:
            raise ValueError("need at least one sample of each class")
        if self.positives.shape[1:] != self.negatives.shape[1:]:
            raise ValueError(
                f"class sample shapes differ: {self.positives.shape[1:]} vs {self.negatives.shape[1:]}")
        if self.positives.ndim < 2:
            raise ValueError("samples must be stacked along a leading axis")

    @classmethod
    def from_labeled(cls, samples, labels):
        samples = np.asarray(samples, dtype=np.float64)
        labels = np.asarray(labels)
        return cls(samples[labels > 0], samples[labels < 0])

    @property
    def dims(self):
        return self.positives.shape[1:]

    @property
    def m1(self):
        return self.positives.shape[0]

    @property
    def m2(self):
        return self.negatives.shape[0]

    def stacked(self):
        """All samples, positives first."""
        return np.concatenate([self.positives, self.negatives])


@dataclass
class TrainHistory:
    objectives: dict = field(default_factory=lambda: {1: [], 2: []})
    representer_residuals: list = field(default_factory=list)
    qp_sweeps: list = field(default_factory=list)
    qp_unconverged: int = 0


@dataclass
class ModelPair:
    factors1: CpFactors
    factors2: CpFactors
    hyper: Hyperparams
    dims: tuple
    norm1: float
    norm2: float
    converged: bool | None
    outer_iters: int
    history: TrainHistory | None = None


@dataclass
class ModeCache:
    """Quantities of one mode subproblem.

    ``transformed[s] = unfold(S_s, j) U^(-j) A^{-1/2}`` for every sample
    (positives first), ``V`` stacks their column-major vectorisations,
    ``K = V'V``.  ``k_own`` holds the rows of ``K`` for the problem's own
    class and ``m_opp`` those of the opposite class.
    """

    problem: int
    mode: int
    ucomp: np.ndarray
    a_half: np.ndarray
    a_inv_half: np.ndarray
    transformed: np.ndarray
    V: np.ndarray
    K: np.ndarray
    k_own: np.ndarray
    m_opp: np.ndarray
    G: np.ndarray


def _problem_terms(hyper, ts, problem):
    """(c_reg, lambda_var, lambda_mean, c_slack, m_opp, y_opp) of a problem."""
    if problem == 1:
        return hyper.c1, hyper.lambda1, hyper.lambda3, hyper.c3, ts.m2, -1.0
    if problem == 2:
        return hyper.c2, hyper.lambda2, hyper.lambda4, hyper.c4, ts.m1, 1.0
    raise ValueError(f"problem must be 1 or 2, got {problem}")


def _own_and_opposite(ts, problem):
    return (ts.positives, ts.negatives) if problem == 1 else (ts.negatives, ts.positives)


def _scores(F, samples):
    samples = np.asarray(samples, dtype=np.float64)
    if samples.shape[0] == 0:
        raise ValueError("empty sample list")
    return cp_inner_many(F, samples)


def margin_mean(F, samples, label):
    """``(1/m) sum label * <W, S>`` over ``samples``."""
    return float(label * _scores(F, samples).mean())


def margin_variance(F, samples):
    """``((m - 1) / m^2) sum <W, S>^2``.

    This is the closed form the dual subproblems are built on; it is not the
    textbook variance unless the cross terms cancel.
    """
    s = _scores(F, samples)
    m = s.shape[0]
    return float((m - 1) / m**2 * np.dot(s, s))


def primal_objective(F, ts, hyper, problem):
    """Value of problem 1 (``F = W1``) or problem 2 (``F = W2``).

    Slacks are set to their optimal hinge values ``max(0, 1 + <W, S_opp>)``.
    """
    c_reg, lam_var, lam_mean, c_slack, m_opp, y_opp = _problem_terms(hyper, ts, problem)
    own, opp = _own_and_opposite(ts, problem)
    s_own = cp_inner_many(F, own)
    s_opp = cp_inner_many(F, opp)
    norm_sq = cp_frobenius(F) ** 2
    variance = (m_opp - 1) / m_opp**2 * np.dot(s_opp, s_opp)
    mean = y_opp * s_opp.mean()
    hinge = np.maximum(0.0, 1.0 + s_opp).sum()
    return float(0.5 * np.dot(s_own, s_own) + 0.5 * c_reg * norm_sq
                 + lam_var * variance - lam_mean * mean + c_slack * hinge)


def _unfold_stack(samples, mode):
    """``unfold(S, mode)`` for every sample, shape ``(m, I_mode, prod(rest))``."""
    moved = np.moveaxis(samples, mode + 1, 1)
    return moved.reshape(moved.shape[0], moved.shape[1], -1, order="F")


def build_mode_cache(F_own, ts, mode, problem, hyper):
    """Assemble the transformed data and dual system matrix of one subproblem."""
    c_reg, lam_var, _, _, m_opp, _ = _problem_terms(hyper, ts, problem)
    ucomp = khatri_rao_complement(F_own, mode)
    a_half, a_inv_half = sym_inv_sqrt(gram_complement(F_own, mode))

    samples = ts.stacked()
    m = samples.shape[0]
    transformed = _unfold_stack(samples, mode) @ (ucomp @ a_inv_half)
    V = transformed.reshape(m, -1, order="F").T
    K = V.T @ V
    K = 0.5 * (K + K.T)
    if problem == 1:
        k_own, m_opp_rows = K[:ts.m1], K[ts.m1:]
    else:
        k_own, m_opp_rows = K[ts.m1:], K[:ts.m1]

    G = (k_own.T @ k_own + c_reg * K
         + (2.0 * lam_var * (m_opp - 1) / m_opp**2) * (m_opp_rows.T @ m_opp_rows))
    G = 0.5 * (G + G.T)
    scale = np.trace(G) / m
    G[np.diag_indices(m)] += hyper.ridge * (scale if scale > 0 else 1.0)
    return ModeCache(problem=problem, mode=mode, ucomp=ucomp, a_half=a_half,
                     a_inv_half=a_inv_half, transformed=transformed, V=V, K=K,
                     k_own=k_own, m_opp=m_opp_rows, G=G)


def assemble_dual(cache, ts, hyper, problem):
    """Box QP ``min 0.5 a'Ha - f'a, 0 <= a <= c`` of one subproblem.

    ``H = M G^{-1} M'`` is formed as ``Z'Z`` with ``Z = L^{-1} M'`` from the
    Cholesky factor of ``G``, so it is PSD by construction.
    """
    _, _, lam_mean, c_slack, m_opp, y_opp = _problem_terms(hyper, ts, problem)
    L = spd_cholesky(cache.G)
    Z = linalg.solve_triangular(L, cache.m_opp.T, lower=True)
    H = Z.T @ Z
    H = 0.5 * (H + H.T)
    y = np.full(m_opp, y_opp)
    f = (lam_mean / m_opp) * (H @ y) + 1.0
    return boxqp.BoxQp(H=H, f=f, c=c_slack)


def _beta_rhs(cache, alpha, ts, hyper, problem):
    _, _, lam_mean, _, m_opp, y_opp = _problem_terms(hyper, ts, problem)
    y = np.full(m_opp, y_opp)
    return (lam_mean / m_opp) * (cache.m_opp.T @ y) - cache.m_opp.T @ np.asarray(alpha)


def recover_beta(cache, alpha, ts, hyper, problem):
    """Representer coefficients ``beta = G^{-1} ((lam/m_opp) M'y_opp - M'alpha)``."""
    return spd_solve(cache.G, _beta_rhs(cache, alpha, ts, hyper, problem))


def representer_residual(cache, beta, alpha, ts, hyper, problem):
    """``||G beta - rhs||`` and ``||rhs||`` for a recovered ``beta``."""
    rhs = _beta_rhs(cache, alpha, ts, hyper, problem)
    return float(np.linalg.norm(cache.G @ beta - rhs)), float(np.linalg.norm(rhs))


def update_mode_factor(cache, beta, mode):
    """New ``U^(j) = reshape(V beta) A^{-1/2}``."""
    rows = cache.transformed.shape[1]
    u_tilde = (cache.V @ np.asarray(beta)).reshape(rows, -1, order="F")
    return u_tilde @ cache.a_inv_half


def _relative_change(new, old):
    denom = cp_frobenius(old)
    dist = cp_distance(new, old)
    if denom == 0.0:
        return 0.0 if dist == 0.0 else np.inf
    return dist / denom


def train(ts, hyper=None):
    """Fit both tensorplanes by alternating over modes.

    Each outer iteration visits modes in ascending order and, per mode,
    updates problem 1 then problem 2.  Training stops once the relative
    change of both weight tensors over an outer iteration is at most
    ``hyper.eps``, or after ``hyper.max_outer`` iterations.
    """
    hyper = hyper or Hyperparams()
    rng = np.random.default_rng(hyper.seed)
    F = {1: CpFactors.random(ts.dims, hyper.rank, rng),
         2: CpFactors.random(ts.dims, hyper.rank, rng)}
    history = TrainHistory()
    for p in (1, 2):
        history.objectives[p].append(primal_objective(F[p], ts, hyper, p))
    warm = {}
    converged = False
    outer = 0
    order = len(ts.dims)
    while outer < hyper.max_outer:
        outer += 1
        previous = {p: F[p].copy() for p in (1, 2)}
        for mode in range(order):
            for p in (1, 2):
                try:
                    cache = build_mode_cache(F[p], ts, mode, p, hyper)
                    qp = assemble_dual(cache, ts, hyper, p)
                    sol = boxqp.solve(qp, tol=hyper.qp_tol, alpha0=warm.get((p, mode)))
                    beta = recover_beta(cache, sol.alpha, ts, hyper, p)
                except (NumericalError, np.linalg.LinAlgError, linalg.LinAlgError) as exc:
                    raise NumericalError(
                        f"outer iteration {outer}, mode {mode}, problem {p}: {exc}") from exc
                warm[(p, mode)] = sol.alpha
                history.qp_sweeps.append(sol.iterations)
                history.qp_unconverged += not sol.converged
                history.representer_residuals.append(
                    representer_residual(cache, beta, sol.alpha, ts, hyper, p))
                F[p].factors[mode] = update_mode_factor(cache, beta, mode)
                history.objectives[p].append(primal_objective(F[p], ts, hyper, p))
        changes = [_relative_change(F[p], previous[p]) for p in (1, 2)]
        if max(changes) <= hyper.eps:
            converged = True
            break
    if history.qp_unconverged:
        warnings.warn(f"{history.qp_unconverged} dual subproblems stopped at the sweep limit",
                      RuntimeWarning, stacklevel=2)
    return ModelPair(factors1=F[1], factors2=F[2], hyper=hyper, dims=tuple(ts.dims),
                     norm1=cp_frobenius(F[1]), norm2=cp_frobenius(F[2]),
                     converged=converged, outer_iters=outer, history=history)


def decision_distances(model, samples):
    """Normalized distances ``|<W_i, X>| / ||W_i||`` to both planes.

    ``samples`` has shape ``(n, *dims)``; returns two arrays of length n.  A
    plane with zero norm is infinitely far away.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.shape[1:] != tuple(model.dims):
        raise ValueError(f"shape mismatch: samples {samples.shape[1:]} vs model {tuple(model.dims)}")
    out = []
    for factors in (model.factors1, model.factors2):
        norm = cp_frobenius(factors)
        if norm == 0.0:
            out.append(np.full(samples.shape[0], np.inf))
        else:
            out.append(np.abs(cp_inner_many(factors, samples)) / norm)
    return out[0], out[1]


def predict(model, samples):
    """Labels (+1 / -1) for a stack of samples; ties go to +1."""
    d1, d2 = decision_distances(model, samples)
    if np.any(np.isinf(d1) & np.isinf(d2)):
        warnings.warn("both tensorplanes are zero; predicting +1", RuntimeWarning, stacklevel=2)
    return np.where(d1 <= d2, 1, -1)


def decide(model, tensor):
    """Label of a single sample tensor."""
    tensor = np.asarray(tensor, dtype=np.float64)
    return int(predict(model, tensor[None])[0])


# Model file: "LNPS", u32 version, u32 M, M x u32 dims, u32 R, then the
# factor matrices of W1 and W2 (mode by mode, column-major f64), then 12 f64
# hyperparameters.  All little-endian.
MODEL_MAGIC = b"LNPS"
MODEL_VERSION = 1
_HYPER_FIELDS = ("c1", "c2", "c3", "c4", "lambda1", "lambda2", "lambda3", "lambda4",
                 "eps", "ridge")


def model_to_bytes(model):
    dims = tuple(model.dims)
    parts = [MODEL_MAGIC, struct.pack("<II", MODEL_VERSION, len(dims)),
             struct.pack(f"<{len(dims)}I", *dims), struct.pack("<I", model.hyper.rank)]
    for factors in (model.factors1, model.factors2):
        for u in factors.factors:
            parts.append(np.asarray(u, dtype="<f8").tobytes(order="F"))
    hyper = [float(getattr(model.hyper, name)) for name in _HYPER_FIELDS]
    hyper += [float(model.hyper.seed), float(model.outer_iters)]
    parts.append(struct.pack("<12d", *hyper))
    return b"".join(parts)


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise FormatError(f"truncated stream while reading {what}", self.pos)
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self, what):
        return struct.unpack("<I", self.take(4, what))[0]


def model_from_bytes(data):
    r = _Reader(bytes(data))
    if r.take(4, "magic") != MODEL_MAGIC:
        raise FormatError("bad magic, expected LNPS", 0)
    version = r.u32("version")
    if version != MODEL_VERSION:
        raise FormatError(f"unsupported model version {version}", 4)
    pos = r.pos
    order = r.u32("order")
    if order < 1:
        raise FormatError("model order must be positive", pos)
    pos = r.pos
    dims = tuple(struct.unpack(f"<{order}I", r.take(4 * order, "dims")))
    if min(dims) < 1:
        raise FormatError("dimensions must be positive", pos)
    pos = r.pos
    rank = r.u32("rank")
    if rank < 1:
        raise FormatError("rank must be positive", pos)
    planes = []
    for _ in range(2):
        mats = []
        for d in dims:
            raw = r.take(8 * d * rank, "factor matrix")
            mats.append(np.frombuffer(raw, dtype="<f8").reshape((d, rank), order="F").astype(np.float64))
        planes.append(CpFactors(mats))
    values = struct.unpack("<12d", r.take(96, "hyperparameters"))
    if r.pos != len(r.data):
        raise FormatError("trailing bytes after model", r.pos)
    named = dict(zip(_HYPER_FIELDS, values[:10]))
    outer_iters = int(values[11])
    hyper = Hyperparams(rank=rank, seed=int(values[10]),
                        max_outer=max(Hyperparams.max_outer, outer_iters), **named)
    return ModelPair(factors1=planes[0], factors2=planes[1], hyper=hyper, dims=dims,
                     norm1=cp_frobenius(planes[0]), norm2=cp_frobenius(planes[1]),
                     converged=None, outer_iters=outer_iters)


def save_model(model, sink):
    """Write ``model`` to a path or binary file object."""
    data = model_to_bytes(model)
    if hasattr(sink, "write"):
        sink.write(data)
    else:
        with open(sink, "wb") as fh:
            fh.write(data)


def load_model(source):
    """Read a model written by :func:`save_model`."""
    if hasattr(source, "read"):
        return model_from_bytes(source.read())
    with open(source, "rb") as fh:
        return model_from_bytes(fh.read())
