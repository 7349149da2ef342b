"""Linear soft-margin SVM without bias, used as the vector baseline.

Tensors are flattened first-index-fastest.  The dual
``min 0.5 a'Qa - e'a, 0 <= a <= C`` with ``Q_ij = y_i y_j x_i'x_j`` has no
equality constraint (there is no bias) and is handed to :mod:`npstm.boxqp`.
Append a constant feature to emulate a bias.
"""
from dataclasses import dataclass
import warnings

import numpy as np

from . import boxqp
from .multilinear import flatten


@dataclass(frozen=True)
class LinearSvmModel:
    w: np.ndarray
    C: float
    support_alphas: np.ndarray
    kkt_residual: float = 0.0


def as_vectors(samples):
    """Flatten a stack ``(n, *dims)`` into rows of length ``prod(dims)``."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim == 1:
        return samples[:, None]
    return np.stack([flatten(s) for s in samples])


def train_svm(vectors, labels, C=1.0, tol=1e-8):
    """Fit ``w = sum_i alpha_i y_i x_i`` on row vectors ``vectors``."""
    X = np.asarray(vectors, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError(f"need an (n, d) matrix and n labels, got {X.shape} and {y.shape}")
    if not np.all((y == 1) | (y == -1)):
        raise ValueError("labels must be +1 or -1")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise ValueError("need at least one sample of each class")
    if not C > 0:
        raise ValueError("C must be positive")
    if not np.any(X):
        warnings.warn("all training vectors are zero; returning w = 0", RuntimeWarning,
                      stacklevel=2)
        n = X.shape[0]
        return LinearSvmModel(w=np.zeros(X.shape[1]), C=float(C), support_alphas=np.full(n, float(C)))
    Yx = y[:, None] * X
    Q = Yx @ Yx.T
    sol = boxqp.solve(boxqp.BoxQp(H=0.5 * (Q + Q.T), f=np.ones(X.shape[0]), c=C), tol=tol)
    if not sol.converged:
        warnings.warn(f"SVM dual stopped at KKT residual {sol.kkt_residual:.3g}",
                      RuntimeWarning, stacklevel=2)
    return LinearSvmModel(w=Yx.T @ sol.alpha, C=float(C), support_alphas=sol.alpha,
                          kkt_residual=sol.kkt_residual)


def decision_values(model, vectors):
    X = np.asarray(vectors, dtype=np.float64)
    if X.ndim == 1:
        X = X[None]
    if X.shape[1] != model.w.shape[0]:
        raise ValueError(f"shape mismatch: {X.shape[1]} features vs model {model.w.shape[0]}")
    return X @ model.w


def predict_svm(model, vectors):
    """``sign(w'x)`` per row with 0 mapped to +1; a single vector gives an int."""
    single = np.asarray(vectors).ndim == 1
    labels = np.where(decision_values(model, vectors) >= 0.0, 1, -1)
    return int(labels[0]) if single else labels
