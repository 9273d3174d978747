"""Univariate polynomial matrices, plain and with affine-in-variables
coefficients, used by the delay-range sum-of-squares machinery.

A PolyAff of shape (p, q) holds one AffExpr per power of the indeterminate;
arithmetic keeps exact coefficient bookkeeping (no sampling), so certificates
are independent of evaluation grids.
"""

from __future__ import annotations

import numpy as np

from . import linalg
from .lmi import AffExpr, bmat, blockdiag, const, hstack, vstack


class PolyAff:
    """Matrix polynomial sum_k C_k r^k with AffExpr coefficients."""

    def __init__(self, coeffs, shape=None):
        self.coeffs = [c if isinstance(c, AffExpr) else AffExpr.constant(c)
                       for c in coeffs]
        if not self.coeffs:
            if shape is None:
                raise ValueError("empty polynomial needs a shape")
            self.coeffs = [AffExpr((shape[0], shape[1]))]
        self.shape = self.coeffs[0].shape
        for c in self.coeffs:
            if c.shape != self.shape:
                raise ValueError("inconsistent coefficient shapes")

    # -- helpers -------------------------------------------------------------
    @staticmethod
    def constant(mat) -> "PolyAff":
        return PolyAff([AffExpr.constant(mat)])

    @staticmethod
    def from_coeff_list(mats) -> "PolyAff":
        return PolyAff([AffExpr.constant(m) for m in mats])

    @staticmethod
    def variable_poly(exprs) -> "PolyAff":
        return PolyAff(list(exprs))

    @property
    def degree(self) -> int:
        deg = 0
        for k, c in enumerate(self.coeffs):
            if c.coeffs or np.any(c.const):
                deg = k
        return deg

    def trimmed(self) -> "PolyAff":
        return PolyAff(self.coeffs[: self.degree + 1])

    def coeff(self, k: int) -> AffExpr:
        if k < len(self.coeffs):
            return self.coeffs[k]
        return AffExpr(self.shape)

    # -- arithmetic ----------------------------------------------------------
    def __add__(self, other):
        other = other if isinstance(other, PolyAff) else PolyAff.constant(other)
        n = max(len(self.coeffs), len(other.coeffs))
        return PolyAff([self.coeff(k) + other.coeff(k) for k in range(n)])

    def __sub__(self, other):
        other = other if isinstance(other, PolyAff) else PolyAff.constant(other)
        return self + (other * -1.0)

    def __mul__(self, scalar: float):
        return PolyAff([c * float(scalar) for c in self.coeffs])

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def shift_mul(self, scalar_poly) -> "PolyAff":
        """Multiply by a scalar polynomial given by its coefficient list."""
        out = [AffExpr(self.shape) for _ in range(len(self.coeffs) + len(scalar_poly) - 1)]
        for i, c in enumerate(self.coeffs):
            for j, s in enumerate(scalar_poly):
                if s != 0.0:
                    out[i + j] = out[i + j] + c * float(s)
        return PolyAff(out)

    def lmul(self, C) -> "PolyAff":
        return PolyAff([c.lmul(C) for c in self.coeffs])

    def rmul(self, C) -> "PolyAff":
        return PolyAff([c.rmul(C) for c in self.coeffs])

    def lmul_poly(self, poly_mats) -> "PolyAff":
        """Left-multiply by a constant polynomial matrix (list of coeffs)."""
        p = poly_mats[0].shape[0]
        out = [AffExpr((p, self.shape[1]))
               for _ in range(len(self.coeffs) + len(poly_mats) - 1)]
        for i, c in enumerate(self.coeffs):
            for j, M in enumerate(poly_mats):
                out[i + j] = out[i + j] + c.lmul(M)
        return PolyAff(out)

    def rmul_poly(self, poly_mats) -> "PolyAff":
        q = poly_mats[0].shape[1]
        out = [AffExpr((self.shape[0], q))
               for _ in range(len(self.coeffs) + len(poly_mats) - 1)]
        for i, c in enumerate(self.coeffs):
            for j, M in enumerate(poly_mats):
                out[i + j] = out[i + j] + c.rmul(M)
        return PolyAff(out)

    @property
    def T(self) -> "PolyAff":
        return PolyAff([c.T for c in self.coeffs])

    def sym(self) -> "PolyAff":
        return PolyAff([c + c.T for c in self.coeffs])

    def kron_left(self, C) -> "PolyAff":
        return PolyAff([c.kron_left(C) for c in self.coeffs])

    def value(self, assignment, space, r: float) -> np.ndarray:
        out = np.zeros(self.shape)
        for k, c in enumerate(self.coeffs):
            out = out + (r ** k) * c.value(assignment, space)
        return out

    def eval_const(self, r: float) -> np.ndarray:
        """Evaluate assuming all coefficients are constant."""
        out = np.zeros(self.shape)
        for k, c in enumerate(self.coeffs):
            if c.coeffs:
                raise ValueError("polynomial carries decision variables")
            out = out + (r ** k) * c.const
        return out

    def is_affine_in_r(self, tol: float = 1e-12) -> bool:
        for c in self.coeffs[2:]:
            if c.coeffs:
                return False
            if np.any(np.abs(c.const) > tol):
                return False
        return True

    def substitute(self, r: float):
        """Collapse the indeterminate to a fixed value; returns an AffExpr."""
        out = AffExpr(self.shape)
        for k, c in enumerate(self.coeffs):
            out = out + c * (r ** k)
        return out


def poly_bmat(rows) -> PolyAff:
    """Block polynomial matrix from PolyAff / constant blocks."""
    grid = [[b if isinstance(b, PolyAff) else PolyAff.constant(b) for b in row]
            for row in rows]
    deg = max(len(b.coeffs) for row in grid for b in row)
    out = []
    for k in range(deg):
        out.append(bmat([[b.coeff(k) for b in row] for row in grid]))
    return PolyAff(out)


def poly_blockdiag(blocks) -> PolyAff:
    blocks = [b if isinstance(b, PolyAff) else PolyAff.constant(b) for b in blocks]
    deg = max(len(b.coeffs) for b in blocks)
    return PolyAff([blockdiag([b.coeff(k) for b in blocks]) for k in range(deg)])
