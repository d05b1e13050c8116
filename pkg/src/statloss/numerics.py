"""Small dense linear algebra for the loss: Cholesky, ridge inverse, traces.

Matrices and vectors are float64 numpy arrays. The factorization and the
inverse are written out by hand (p is capped at 64) so results do not depend
on the LAPACK build.
"""
from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch, NotPositiveDefinite

PIVOT_TOL = 1e-14
MAX_DIM = 64


def _square(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    return a


def is_symmetric(a: np.ndarray) -> bool:
    a = np.asarray(a, dtype=np.float64)
    return bool(np.all(np.abs(a - a.T) <= 1e-12 * np.maximum(1.0, np.abs(a))))


def cholesky_factor(a) -> np.ndarray:
    """Return lower-triangular L with L @ L.T == a.

    Raises NotPositiveDefinite when a pivot is <= 1e-14; callers usually
    retry with a larger ridge.
    """
    a = _square(a)
    if not is_symmetric(a):
        raise NotPositiveDefinite("matrix is not symmetric")
    n = a.shape[0]
    L = np.zeros_like(a)
    for j in range(n):
        row = L[j, :j]
        pivot = a[j, j] - row @ row
        if not pivot > PIVOT_TOL:
            raise NotPositiveDefinite(f"pivot {j} is {pivot:.3e}")
        d = np.sqrt(pivot)
        L[j, j] = d
        if j + 1 < n:
            L[j + 1:, j] = (a[j + 1:, j] - L[j + 1:, :j] @ row) / d
    return L


def _lower_inverse(L: np.ndarray) -> np.ndarray:
    # forward substitution against the identity, one row at a time
    n = L.shape[0]
    inv = np.zeros_like(L)
    for i in range(n):
        rhs = -(L[i, :i] @ inv[:i, :])
        rhs[i] += 1.0
        inv[i, :] = rhs / L[i, i]
    return inv


def ridge_inverse(a, eps: float = 0.0) -> np.ndarray:
    """Return (a + eps*I)^-1 via its Cholesky factor, symmetrized."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    a = _square(a)
    if a.shape[0] > MAX_DIM:
        raise DimensionMismatch(f"dimension {a.shape[0]} exceeds cap {MAX_DIM}")
    m = a + eps * np.eye(a.shape[0]) if eps else a
    Linv = _lower_inverse(cholesky_factor(m))
    inv = Linv.T @ Linv
    return 0.5 * (inv + inv.T)


def quadratic_form(v, a) -> float:
    v = np.asarray(v, dtype=np.float64)
    a = _square(a)
    if v.ndim != 1 or v.shape[0] != a.shape[0]:
        raise DimensionMismatch(f"vector of dim {v.shape} against {a.shape} matrix")
    return float(v @ a @ v)


def trace(a) -> float:
    a = _square(a)
    return float(np.sum(np.diag(a)))
