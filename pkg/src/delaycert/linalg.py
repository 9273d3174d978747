"""Structural dense linear algebra: Kronecker products, commutation matrices,
direct sums, symmetrization and PD square roots.

Empty matrices (any dimension equal to zero) are first-class citizens: products
and concatenations collapse dimensions the way Matlab's ``[]`` algebra does,
which keeps the block assemblies uniform when optional channels are absent.
"""

from __future__ import annotations

import numpy as np


def as_matrix(a) -> np.ndarray:
    """Coerce scalars / nested lists / arrays to a 2-D float array.

    Scalars become 1x1 matrices; 1-D arrays become column vectors.
    """
    m = np.asarray(a, dtype=float)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    elif m.ndim == 1:
        m = m.reshape(-1, 1)
    elif m.ndim != 2:
        raise ValueError(f"expected at most 2 dimensions, got {m.ndim}")
    return m


def empty(rows: int = 0, cols: int = 0) -> np.ndarray:
    """The rows x cols empty matrix (at least one dimension is zero)."""
    if rows and cols:
        raise ValueError("an empty matrix needs a zero dimension")
    return np.zeros((rows, cols))


def eye(n: int) -> np.ndarray:
    return np.eye(n)


def zeros(rows: int, cols: int) -> np.ndarray:
    return np.zeros((rows, cols))


def kron(a, b) -> np.ndarray:
    """Kronecker product with empty operands allowed."""
    a = as_matrix(a)
    b = as_matrix(b)
    if min(a.shape) == 0 or min(b.shape) == 0:
        return np.zeros((a.shape[0] * b.shape[0], a.shape[1] * b.shape[1]))
    return np.kron(a, b)


def vec(a) -> np.ndarray:
    """Column-major vectorization: vec(A) stacks the columns of A."""
    return as_matrix(a).flatten(order="F")


def unvec(v, rows: int, cols: int) -> np.ndarray:
    return np.asarray(v, dtype=float).reshape(rows, cols, order="F")


def commutation(n: int, m: int) -> np.ndarray:
    """Permutation K with K @ vec(A) = vec(A.T) for every n x m matrix A.

    Satisfies commutation(n, m).T == commutation(m, n) and K @ K.T == I.
    """
    if n < 1 or m < 1:
        raise ValueError("commutation requires n, m >= 1")
    K = np.zeros((n * m, n * m))
    # vec(A)[i + j*n] = A[i, j] maps to vec(A.T)[j + i*m]
    for i in range(n):
        for j in range(m):
            K[j + i * m, i + j * n] = 1.0
    return K


def sym(x) -> np.ndarray:
    """Sy(X) = X + X.T for square X."""
    x = as_matrix(x)
    if x.shape[0] != x.shape[1]:
        raise ValueError(f"sym needs a square matrix, got {x.shape}")
    return x + x.T


def direct_sum(blocks) -> np.ndarray:
    """Block-diagonal concatenation; empty blocks vanish, direct_sum([]) = 0x0."""
    mats = [as_matrix(b) for b in blocks]
    rows = sum(m.shape[0] for m in mats)
    cols = sum(m.shape[1] for m in mats)
    out = np.zeros((rows, cols))
    r = c = 0
    for m in mats:
        out[r:r + m.shape[0], c:c + m.shape[1]] = m
        r += m.shape[0]
        c += m.shape[1]
    return out


def block(rows) -> np.ndarray:
    """np.block with empty-matrix tolerance (zero-width blocks are dropped)."""
    out_rows = []
    for row in rows:
        mats = [as_matrix(b) for b in row]
        height = max((m.shape[0] for m in mats), default=0)
        mats = [m for m in mats if m.shape[1] > 0 or m.shape[0] != height]
        kept = [m for m in mats if m.shape[1] > 0]
        if kept:
            out_rows.append(np.hstack(kept))
        else:
            out_rows.append(np.zeros((height, 0)))
    widths = {r.shape[1] for r in out_rows}
    if len(widths) > 1:
        raise ValueError(f"ragged block rows: widths {sorted(widths)}")
    kept_rows = [r for r in out_rows if r.shape[0] > 0]
    if not kept_rows:
        return np.zeros((0, widths.pop() if widths else 0))
    return np.vstack(kept_rows)


def symmetrize(x, rtol: float = 1e-10) -> np.ndarray:
    """Return (X + X.T)/2; error when the asymmetry exceeds rtol relatively."""
    x = as_matrix(x)
    if x.shape[0] != x.shape[1]:
        raise ValueError("symmetrize needs a square matrix")
    if x.size:
        gap = np.abs(x - x.T).max()
        scale = max(np.abs(x).max(), 1.0)
        if gap > rtol * scale:
            raise ValueError(f"matrix is not symmetric: |X - X.T| = {gap:.3e}")
    return 0.5 * (x + x.T)


def is_psd(x, tol: float = 0.0) -> bool:
    x = symmetrize(x, rtol=1e-8)
    if x.size == 0:
        return True
    return float(np.linalg.eigvalsh(x).min()) >= -tol


def min_eig(x) -> float:
    x = as_matrix(x)
    if x.size == 0:
        return np.inf
    return float(np.linalg.eigvalsh(0.5 * (x + x.T)).min())


class NotPositiveDefiniteError(ValueError):
    """Raised by sqrt_pd when the input is not PD; carries the minimum eigenvalue."""

    def __init__(self, min_eigenvalue: float):
        self.min_eigenvalue = min_eigenvalue
        super().__init__(f"matrix is not positive definite (min eig {min_eigenvalue:.3e})")


def sqrt_pd(x) -> np.ndarray:
    """Unique symmetric PD square root of a PD matrix.

    Satisfies sqrt_pd(inv(X)) == inv(sqrt_pd(X)).
    """
    x = symmetrize(x)
    if x.size == 0:
        return x
    w, v = np.linalg.eigh(x)
    if w.min() <= 0:
        raise NotPositiveDefiniteError(float(w.min()))
    return (v * np.sqrt(w)) @ v.T


def inv_sqrt_pd(x) -> np.ndarray:
    """Inverse of the PD square root, computed from one eigendecomposition."""
    x = symmetrize(x)
    if x.size == 0:
        return x
    w, v = np.linalg.eigh(x)
    if w.min() <= 0:
        raise NotPositiveDefiniteError(float(w.min()))
    return (v / np.sqrt(w)) @ v.T
