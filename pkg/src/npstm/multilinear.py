"""Tensor and matrix primitives.

Tensors are plain ``numpy.ndarray`` objects of dtype float64.  Wherever a
tensor is linearised (``flatten``, ``vec``, unfolding columns, file I/O) the
first index varies fastest, i.e. Fortran order.  Modes are 0-based.
"""
from dataclasses import dataclass
import warnings

import numpy as np
from scipy import linalg

from . import kernels
from .errors import NumericalError


def as_tensor(values, dims=None):
    """Validate ``values`` as a dense real tensor and return a float64 array.

    If ``dims`` is given, ``values`` is read as a flat array in first-index-
    fastest order and reshaped.
    """
    arr = np.asarray(values, dtype=np.float64)
    if dims is not None:
        dims = tuple(int(d) for d in dims)
        if arr.size != int(np.prod(dims)):
            raise ValueError(f"{arr.size} values cannot fill a tensor of shape {dims}")
        arr = arr.reshape(dims, order="F")
    if arr.ndim == 0 or 0 in arr.shape:
        raise ValueError("a tensor needs at least one mode and positive dimensions")
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor has non-finite entries")
    return arr


def flatten(tensor):
    """Linear value array of ``tensor`` (first index fastest)."""
    return np.asarray(tensor, dtype=np.float64).ravel(order="F")


def unflatten(values, dims):
    return np.asarray(values, dtype=np.float64).reshape(tuple(dims), order="F")


def _check_same_shape(a, b):
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def inner_product(a, b):
    """Sum of elementwise products of two same-shaped tensors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_same_shape(a, b)
    return float(np.dot(a.ravel(), b.ravel()))


def frobenius_norm(a):
    return float(np.sqrt(inner_product(a, a)))


def outer_product(vectors):
    """Outer product ``v_1 o v_2 o ... o v_M`` as an order-M tensor."""
    vectors = [np.asarray(v, dtype=np.float64).ravel() for v in vectors]
    if not vectors:
        raise ValueError("outer_product needs at least one vector")
    if any(v.size == 0 for v in vectors):
        raise ValueError("outer_product vectors must be nonempty")
    out = vectors[0]
    for v in vectors[1:]:
        out = np.multiply.outer(out, v)
    return out


def unfold(tensor, mode):
    """Mode-``mode`` matricization, shape ``I_mode x prod(other dims)``.

    Columns are the mode fibres, ordered with the remaining indices varying
    first-fastest, so element ``(i_1..i_M)`` lands in column
    ``sum_{k != n} i_k J_k`` with ``J_k`` the product of the earlier
    remaining dimensions.
    """
    tensor = np.asarray(tensor, dtype=np.float64)
    if not 0 <= mode < tensor.ndim:
        raise ValueError(f"mode {mode} out of range for an order-{tensor.ndim} tensor")
    return np.moveaxis(tensor, mode, 0).reshape((tensor.shape[mode], -1), order="F")


def fold(matrix, mode, dims):
    """Inverse of :func:`unfold`."""
    dims = tuple(dims)
    moved = (dims[mode],) + dims[:mode] + dims[mode + 1:]
    return np.moveaxis(np.asarray(matrix).reshape(moved, order="F"), 0, mode)


def kronecker(a, b):
    return np.kron(np.atleast_2d(a), np.atleast_2d(b))


def khatri_rao(a, b):
    """Column-wise Kronecker product ``[a_1 (x) b_1, ..., a_K (x) b_K]``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if b.ndim == 1:
        b = b[:, None]
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"column mismatch: {a.shape[1]} vs {b.shape[1]}")
    return (a[:, None, :] * b[None, :, :]).reshape(-1, a.shape[1])


@dataclass
class CpFactors:
    """Factor matrices ``U^(j)`` (``I_j x R``) of a CP-structured tensor."""

    factors: list

    def __post_init__(self):
        self.factors = [np.array(u, dtype=np.float64, ndmin=2) for u in self.factors]
        if not self.factors:
            raise ValueError("CpFactors needs at least one factor matrix")
        ranks = {u.shape[1] for u in self.factors}
        if len(ranks) != 1:
            raise ValueError(f"factor matrices disagree on rank: {sorted(ranks)}")
        if self.rank < 1:
            raise ValueError("rank must be positive")

    @property
    def rank(self):
        return self.factors[0].shape[1]

    @property
    def order(self):
        return len(self.factors)

    @property
    def dims(self):
        return tuple(u.shape[0] for u in self.factors)

    def copy(self):
        return CpFactors([u.copy() for u in self.factors])

    def scaled(self, t):
        """Factors of ``t * W`` (the scale is applied to the first mode)."""
        out = self.copy()
        out.factors[0] *= t
        return out

    @classmethod
    def random(cls, dims, rank, rng):
        """Standard-normal factors with unit-norm columns."""
        factors = []
        for d in dims:
            u = rng.standard_normal((d, rank))
            norms = np.linalg.norm(u, axis=0)
            norms[norms == 0] = 1.0
            factors.append(u / norms)
        return cls(factors)


def _check_mode(F, mode):
    if not 0 <= mode < F.order:
        raise ValueError(f"mode {mode} out of range for order {F.order}")


def khatri_rao_complement(F, mode):
    """``U^(M) . ... . U^(j+1) . U^(j-1) . ... . U^(1)`` (Khatri-Rao).

    For an order-1 tensor the product is empty and the ``1 x R`` ones row is
    returned.
    """
    _check_mode(F, mode)
    others = [F.factors[k] for k in reversed(range(F.order)) if k != mode]
    if not others:
        return np.ones((1, F.rank))
    out = others[0]
    for u in others[1:]:
        out = khatri_rao(out, u)
    return out


def cp_reconstruct(F):
    """Dense tensor ``sum_r u_r^(1) o ... o u_r^(M)``."""
    out = np.zeros(F.dims)
    for r in range(F.rank):
        out += outer_product([u[:, r] for u in F.factors])
    return out


def cp_unfold(F, mode):
    """Mode-``mode`` unfolding ``U^(j) (U^(-j))'`` of the CP tensor."""
    return F.factors[mode] @ khatri_rao_complement(F, mode).T


def cp_inner_many(F, samples):
    """``<W, X_n>`` for a stack ``samples`` of shape ``(n, *dims)``.

    Contracts one mode at a time per rank-one term; ``W`` is never formed.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.shape[1:] != F.dims:
        raise ValueError(f"shape mismatch: samples {samples.shape[1:]} vs weights {F.dims}")
    z = np.moveaxis(np.tensordot(samples, F.factors[0], axes=(1, 0)), -1, 1)
    for u in F.factors[1:]:
        z = np.einsum("nri...,ir->nr...", z, u)
    return z.sum(axis=1)


def cp_inner(F, tensor):
    tensor = np.asarray(tensor, dtype=np.float64)
    return float(cp_inner_many(F, tensor[None])[0])


def _gram_hadamard(left, right):
    out = np.ones((left.rank, right.rank))
    for u, v in zip(left.factors, right.factors):
        out *= u.T @ v
    return out


def cp_frobenius(F):
    """``||W||_F`` from the factor Grams, without reconstruction."""
    return float(np.sqrt(max(_gram_hadamard(F, F).sum(), 0.0)))


def cp_distance(F, G):
    """``||W_F - W_G||_F`` via Gram identities."""
    sq = _gram_hadamard(F, F).sum() + _gram_hadamard(G, G).sum() - 2.0 * _gram_hadamard(F, G).sum()
    return float(np.sqrt(max(sq, 0.0)))


def gram_complement(F, mode):
    """``(U^(-j))' U^(-j)`` as a Hadamard product of per-factor Grams."""
    _check_mode(F, mode)
    out = np.ones((F.rank, F.rank))
    for k, u in enumerate(F.factors):
        if k != mode:
            out *= u.T @ u
    return out


def sym_eig(S, tol=1e-12, max_sweeps=100):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi sweeps.

    Returns ``(eigenvalues, Q)`` with eigenvalues in descending order and
    ``S = Q diag(eigenvalues) Q'``.
    """
    S = np.array(S, dtype=np.float64, ndmin=2)
    if S.shape[0] != S.shape[1]:
        raise ValueError(f"sym_eig needs a square matrix, got {S.shape}")
    scale = np.linalg.norm(S)
    if np.linalg.norm(S - S.T) > 1e-10 * scale:
        raise ValueError("sym_eig needs a symmetric matrix")
    A = np.ascontiguousarray(0.5 * (S + S.T))
    Q = np.eye(S.shape[0])
    kernels.jacobi_eigh(A, Q, tol * scale, max_sweeps)
    w = A.diagonal().copy()
    order = np.argsort(-w, kind="stable")
    return w[order], np.ascontiguousarray(Q[:, order])


def sym_inv_sqrt(S, floor_ratio=1e-12):
    """``(S^{1/2}, S^{-1/2})`` of a symmetric PSD matrix.

    Eigenvalues below ``floor_ratio * lambda_max`` are raised to that floor.
    An all-zero input yields ``(I, I)`` and a warning.
    """
    w, Q = sym_eig(S)
    n = w.shape[0]
    lmax = w[0] if n else 0.0
    if not lmax > 0.0:
        warnings.warn("sym_inv_sqrt: matrix has no positive eigenvalue; using identity",
                      RuntimeWarning, stacklevel=2)
        return np.eye(n), np.eye(n)
    w = np.maximum(w, floor_ratio * lmax)
    root = np.sqrt(w)
    half = (Q * root) @ Q.T
    inv_half = (Q / root) @ Q.T
    return 0.5 * (half + half.T), 0.5 * (inv_half + inv_half.T)


def spd_cholesky(S):
    """Lower Cholesky factor of ``S``, adding diagonal jitter if needed.

    Jitter starts at ``1e-12 * tr(S)/n`` and doubles up to ``1e-4 * tr(S)/n``.
    """
    S = np.asarray(S, dtype=np.float64)
    n = S.shape[0]
    base = max(float(np.trace(S)) / n, np.finfo(float).tiny)
    jitter = 0.0
    while True:
        try:
            return linalg.cholesky(S + jitter * np.eye(n), lower=True, check_finite=True)
        except (linalg.LinAlgError, ValueError):
            pass
        jitter = 1e-12 * base if jitter == 0.0 else 2.0 * jitter
        if jitter > 1e-4 * base:
            raise NumericalError("Cholesky factorization failed after maximum jitter")


def spd_solve(S, B, refine=2):
    """Solve ``S X = B`` for symmetric positive definite ``S``.

    Uses a Cholesky factorization plus up to ``refine`` steps of iterative
    refinement against ``S`` itself.
    """
    S = np.asarray(S, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    L = spd_cholesky(S)
    X = linalg.cho_solve((L, True), B)
    bnorm = np.linalg.norm(B)
    for _ in range(refine):
        R = B - S @ X
        if np.linalg.norm(R) <= 1e-12 * bnorm:
            break
        X = X + linalg.cho_solve((L, True), R)
    return X
