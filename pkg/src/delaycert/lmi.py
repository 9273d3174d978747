"""Affine symmetric-matrix expressions and LMI problem containers.

A decision variable is a symmetric matrix, a rectangular matrix or a scalar,
scalarized into a flat vector of free entries.  An :class:`AffExpr` is a
matrix whose entries are affine in those scalars; all assemblies in this
package are built by combining expressions with constant matrices through
products, Kronecker products, transposes and block concatenation.

Internally an expression of shape (p, q) stores, per variable, a sparse
(num_scalars x p*q) matrix whose row j is the column-major ``vec`` of the
coefficient of that variable's j-th scalar.  Every linear matrix operation
then becomes a sparse right-multiplication of the coefficient matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import linalg
from .sdp import ConicProgram, SolveReport, solve as sdp_solve, svec_dim, _tri


# ---------------------------------------------------------------------------
# decision variables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DecisionVar:
    name: str
    kind: str                   # 'sym' | 'rect' | 'scalar'
    rows: int
    cols: int

    @property
    def num_scalars(self) -> int:
        if self.kind == "sym":
            return self.rows * (self.rows + 1) // 2
        return self.rows * self.cols

    def basis(self) -> sp.csr_matrix:
        """(num_scalars, rows*cols) map from scalars to vec of the matrix."""
        p, q = self.rows, self.cols
        if self.kind == "sym":
            i, j, _ = _tri(p)
            rows_idx, cols_idx, data = [], [], []
            for k, (a, b) in enumerate(zip(i, j)):
                rows_idx.append(k)
                cols_idx.append(a + b * p)
                data.append(1.0)
                if a != b:
                    rows_idx.append(k)
                    cols_idx.append(b + a * p)
                    data.append(1.0)
            return sp.csr_matrix((data, (rows_idx, cols_idx)),
                                 shape=(self.num_scalars, p * p))
        n = p * q
        return sp.csr_matrix((np.ones(n), (np.arange(n), np.arange(n))),
                             shape=(n, n))

    def unpack(self, scalars: np.ndarray) -> np.ndarray:
        v = self.basis().T @ scalars
        m = v.reshape(self.rows, self.cols, order="F")
        return float(m[0, 0]) if self.kind == "scalar" else m


# ---------------------------------------------------------------------------
# affine expressions
# ---------------------------------------------------------------------------


def _vec_embed(p, q, P, Q, r0, c0) -> sp.csr_matrix:
    """Operator placing a (p,q) block at (r0,c0) of a (P,Q) matrix (vec coords)."""
    a = np.arange(p)
    b = np.arange(q)
    in_idx = (a[:, None] + b[None, :] * p).ravel()
    out_idx = ((r0 + a)[:, None] + (c0 + b)[None, :] * P).ravel()
    return sp.csr_matrix((np.ones(in_idx.size), (out_idx, in_idx)),
                         shape=(P * Q, p * q))


def _kron_left_op(C: np.ndarray, p: int, q: int) -> sp.csr_matrix:
    """vec(X) -> vec(kron(C, X)) for fixed C (m x l), X of shape (p, q)."""
    m, l = C.shape
    P, Q = m * p, l * q
    rows, cols, data = [], [], []
    a = np.arange(p)
    b = np.arange(q)
    in_idx = (a[:, None] + b[None, :] * p).ravel()
    ar = np.repeat(a, q)
    br = np.tile(b, p)
    in_flat = ar + br * p
    for i in range(m):
        for j in range(l):
            if C[i, j] == 0.0:
                continue
            out_flat = (i * p + ar) + (j * q + br) * P
            rows.append(out_flat)
            cols.append(in_flat)
            data.append(np.full(in_flat.size, C[i, j]))
    if not rows:
        return sp.csr_matrix((P * Q, p * q))
    return sp.csr_matrix((np.concatenate(data),
                          (np.concatenate(rows), np.concatenate(cols))),
                         shape=(P * Q, p * q))


def _kron_right_op(C: np.ndarray, p: int, q: int) -> sp.csr_matrix:
    """vec(X) -> vec(kron(X, C)) for fixed C (m x l)."""
    m, l = C.shape
    P, Q = p * m, q * l
    rows, cols, data = [], [], []
    ci, cj = np.nonzero(C)
    vals = C[ci, cj]
    for a in range(p):
        for b in range(q):
            out_flat = (a * m + ci) + (b * l + cj) * P
            rows.append(out_flat)
            cols.append(np.full(ci.size, a + b * p))
            data.append(vals)
    if not rows:
        return sp.csr_matrix((P * Q, p * q))
    return sp.csr_matrix((np.concatenate(data),
                          (np.concatenate(rows), np.concatenate(cols))),
                         shape=(P * Q, p * q))


def _transpose_op(p: int, q: int) -> sp.csr_matrix:
    out = np.arange(p * q)
    a = out % p
    b = out // p
    return sp.csr_matrix((np.ones(p * q), (b + a * q, out)), shape=(p * q, p * q))


class AffExpr:
    """Matrix expression affine in the declared decision variables."""

    __slots__ = ("shape", "const", "coeffs")

    def __init__(self, shape, const=None, coeffs=None):
        self.shape = tuple(shape)
        p, q = self.shape
        self.const = np.zeros((p, q)) if const is None else np.asarray(const, dtype=float).reshape(p, q)
        self.coeffs: dict[str, sp.csr_matrix] = coeffs or {}

    # -- construction helpers ------------------------------------------------
    @staticmethod
    def constant(mat) -> "AffExpr":
        m = linalg.as_matrix(mat)
        return AffExpr(m.shape, const=m)

    @staticmethod
    def from_var(var: DecisionVar) -> "AffExpr":
        return AffExpr((var.rows, var.cols), coeffs={var.name: var.basis()})

    # -- arithmetic ----------------------------------------------------------
    @staticmethod
    def _as_expr(other, shape=None) -> "AffExpr":
        if isinstance(other, AffExpr):
            return other
        return AffExpr.constant(other)

    def __add__(self, other):
        other = AffExpr._as_expr(other)
        if other.shape != self.shape:
            raise ValueError(f"shape mismatch {self.shape} vs {other.shape}")
        coeffs = dict(self.coeffs)
        for k, v in other.coeffs.items():
            coeffs[k] = coeffs[k] + v if k in coeffs else v
        return AffExpr(self.shape, self.const + other.const, coeffs)

    def __radd__(self, other):
        return self.__add__(other)

    def __sub__(self, other):
        return self + (AffExpr._as_expr(other) * -1.0)

    def __rsub__(self, other):
        return AffExpr._as_expr(other) + (self * -1.0)

    def __neg__(self):
        return self * -1.0

    def __mul__(self, scalar: float):
        s = float(scalar)
        return AffExpr(self.shape, self.const * s,
                       {k: v * s for k, v in self.coeffs.items()})

    __rmul__ = __mul__

    def _apply(self, op: sp.csr_matrix, new_shape) -> "AffExpr":
        const = (op @ self.const.flatten(order="F")).reshape(new_shape, order="F")
        coeffs = {k: (v @ op.T).tocsr() for k, v in self.coeffs.items()}
        return AffExpr(new_shape, const, coeffs)

    def lmul(self, C) -> "AffExpr":
        """C @ self."""
        C = linalg.as_matrix(C)
        p, q = self.shape
        if C.shape[1] != p:
            raise ValueError(f"lmul mismatch: {C.shape} @ {self.shape}")
        op = sp.kron(sp.eye(q), sp.csr_matrix(C), format="csr")
        return self._apply(op, (C.shape[0], q))

    def rmul(self, C) -> "AffExpr":
        """self @ C."""
        C = linalg.as_matrix(C)
        p, q = self.shape
        if C.shape[0] != q:
            raise ValueError(f"rmul mismatch: {self.shape} @ {C.shape}")
        op = sp.kron(sp.csr_matrix(C.T), sp.eye(p), format="csr")
        return self._apply(op, (p, C.shape[1]))

    @property
    def T(self) -> "AffExpr":
        p, q = self.shape
        return self._apply(_transpose_op(p, q), (q, p))

    def sym(self) -> "AffExpr":
        if self.shape[0] != self.shape[1]:
            raise ValueError("sym needs a square expression")
        return self + self.T

    def kron_left(self, C) -> "AffExpr":
        """kron(C, self)."""
        C = linalg.as_matrix(C)
        p, q = self.shape
        return self._apply(_kron_left_op(C, p, q), (C.shape[0] * p, C.shape[1] * q))

    def kron_right(self, C) -> "AffExpr":
        """kron(self, C)."""
        C = linalg.as_matrix(C)
        p, q = self.shape
        return self._apply(_kron_right_op(C, p, q), (p * C.shape[0], q * C.shape[1]))

    def trace(self) -> "AffExpr":
        p, q = self.shape
        if p != q:
            raise ValueError("trace needs a square expression")
        sel = sp.csr_matrix((np.ones(p), (np.zeros(p, dtype=int),
                                          np.arange(p) * (p + 1))), shape=(1, p * p))
        return self._apply(sel, (1, 1))

    def value(self, assignment: dict[str, np.ndarray], space: "VarSpace") -> np.ndarray:
        out = self.const.copy()
        for name, rows in self.coeffs.items():
            var = space[name]
            scal = assignment[name]
            out += (rows.T @ scal).reshape(self.shape, order="F")
        return out

    def is_zero(self) -> bool:
        return not self.coeffs and not np.any(self.const)


def bmat(rows) -> AffExpr:
    """Block matrix from a nested list of AffExpr / arrays (empty blocks ok)."""
    grid = [[b if isinstance(b, AffExpr) else AffExpr.constant(b) for b in row]
            for row in rows]
    heights = [max(b.shape[0] for b in row) for row in grid]
    for row, h in zip(grid, heights):
        for b in row:
            if b.shape[0] not in (h,):
                raise ValueError(f"ragged block heights: {b.shape[0]} vs {h}")
    widths = [b.shape[1] for b in grid[0]]
    for row in grid:
        for k, b in enumerate(row):
            if b.shape[1] != widths[k]:
                raise ValueError("ragged block widths")
    P, Q = sum(heights), sum(widths)
    const = np.zeros((P, Q))
    coeffs: dict[str, sp.csr_matrix] = {}
    r0 = 0
    for row, h in zip(grid, heights):
        c0 = 0
        for b, w in zip(row, widths):
            if h and w:
                const[r0:r0 + h, c0:c0 + w] = b.const
                if b.coeffs:
                    op = _vec_embed(h, w, P, Q, r0, c0)
                    for k, v in b.coeffs.items():
                        add = (v @ op.T).tocsr()
                        coeffs[k] = coeffs[k] + add if k in coeffs else add
            c0 += w
        r0 += h
    return AffExpr((P, Q), const, coeffs)


def blockdiag(blocks) -> AffExpr:
    """Direct sum of expressions; zero-size blocks vanish."""
    blocks = [b if isinstance(b, AffExpr) else AffExpr.constant(b) for b in blocks]
    blocks = [b for b in blocks if b.shape[0] > 0 or b.shape[1] > 0]
    P = sum(b.shape[0] for b in blocks)
    Q = sum(b.shape[1] for b in blocks)
    const = np.zeros((P, Q))
    coeffs: dict[str, sp.csr_matrix] = {}
    r0 = c0 = 0
    for b in blocks:
        h, w = b.shape
        if h and w:
            const[r0:r0 + h, c0:c0 + w] = b.const
            if b.coeffs:
                op = _vec_embed(h, w, P, Q, r0, c0)
                for k, v in b.coeffs.items():
                    add = (v @ op.T).tocsr()
                    coeffs[k] = coeffs[k] + add if k in coeffs else add
        r0 += h
        c0 += w
    return AffExpr((P, Q), const, coeffs)


def hstack(blocks) -> AffExpr:
    return bmat([list(blocks)])


def vstack(blocks) -> AffExpr:
    return bmat([[b] for b in blocks])


# ---------------------------------------------------------------------------
# problem container
# ---------------------------------------------------------------------------


class VarSpace(dict):
    pass


@dataclass
class Constraint:
    expr: AffExpr
    sense: str      # 'psd' | 'nsd'
    strict: bool
    name: str = ""


@dataclass
class LmiSolution:
    report: SolveReport
    values: dict[str, object] = field(default_factory=dict)
    objective: float | None = None
    certificate: dict | None = None

    @property
    def feasible(self) -> bool:
        return self.report.feasible

    def __getitem__(self, name):
        return self.values[name]


class LmiProblem:
    """Symmetric-matrix decision variables with affine PSD/NSD constraints.

    Strict inequalities are encoded with a margin ``eps * I``; the post-hoc
    eigenvalue certificate is available separately through ``certify``.
    """

    def __init__(self, margin: float = 1e-7):
        self.space = VarSpace()
        self.constraints: list[Constraint] = []
        self.equalities: list[AffExpr] = []
        self.objective: AffExpr | None = None
        self.margin = margin
        self.extractors: dict[str, callable] = {}
        self.certificate_blocks: dict[str, AffExpr] = {}

    # -- variables -----------------------------------------------------------
    def _register(self, var: DecisionVar) -> AffExpr:
        if var.name in self.space:
            raise ValueError(f"variable {var.name!r} already declared")
        self.space[var.name] = var
        return AffExpr.from_var(var)

    def sym(self, name: str, n: int) -> AffExpr:
        return self._register(DecisionVar(name, "sym", n, n))

    def rect(self, name: str, rows: int, cols: int) -> AffExpr:
        return self._register(DecisionVar(name, "rect", rows, cols))

    def scalar(self, name: str, nonneg: bool = False, floor: float = 0.0) -> AffExpr:
        e = self._register(DecisionVar(name, "scalar", 1, 1))
        if nonneg:
            self.psd(e - floor * np.eye(1), name=f"{name}>=_{floor}")
        return e

    # -- constraints ---------------------------------------------------------
    def psd(self, expr: AffExpr, strict: bool = False, name: str = ""):
        self.constraints.append(Constraint(expr, "psd", strict, name))

    def nsd(self, expr: AffExpr, strict: bool = False, name: str = ""):
        self.constraints.append(Constraint(expr, "nsd", strict, name))

    def eq(self, expr: AffExpr, name: str = ""):
        self.equalities.append(expr)

    def minimize(self, expr: AffExpr):
        if expr.shape != (1, 1):
            raise ValueError("objective must be scalar")
        self.objective = expr

    def certify_block(self, name: str, expr: AffExpr):
        """Register a matrix whose strict positivity is certified post hoc."""
        self.certificate_blocks[name] = expr

    def num_scalars(self) -> int:
        return sum(v.num_scalars for v in self.space.values())

    # -- compilation ---------------------------------------------------------
    def compile(self) -> ConicProgram:
        names = list(self.space)
        offsets, k = {}, 0
        for n in names:
            offsets[n] = k
            k += self.space[n].num_scalars

        c = np.zeros(k)
        if self.objective is not None:
            for n, rows in self.objective.coeffs.items():
                c[offsets[n]:offsets[n] + self.space[n].num_scalars] += rows.toarray().ravel()

        # homogeneous feasibility problems (no constant terms, no objective):
        # the strict margin is a pure normalization, so use a well-scaled one
        homogeneous = (self.objective is None
                       and all(not np.any(c.expr.const) for c in self.constraints)
                       and all(not np.any(e.const) for e in self.equalities))
        margin = 1.0 if homogeneous else self.margin

        dims, Grows, hparts = [], [], []
        for con in self.constraints:
            expr = con.expr if con.sense == "psd" else con.expr * -1.0
            p, q = expr.shape
            if p != q:
                raise ValueError(f"constraint {con.name!r} is not square")
            if p == 0:
                continue
            # symmetry audit on the coefficient structure
            asym = np.abs(expr.const - expr.const.T).max() if expr.const.size else 0.0
            scale = max(1.0, np.abs(expr.const).max())
            Top = _transpose_op(p, p)
            for nme, rows in expr.coeffs.items():
                d = rows - rows @ Top.T
                if d.nnz:
                    asym = max(asym, np.abs(d.data).max())
                scale = max(scale, np.abs(rows.data).max() if rows.nnz else 0.0)
            if asym > 1e-12 * scale:
                raise ValueError(f"constraint {con.name!r} is not symmetric-affine "
                                 f"(asymmetry {asym:.2e})")
            const = 0.5 * (expr.const + expr.const.T)
            if con.strict:
                const = const - margin * np.eye(p)
            i, j, sc = _tri(p)
            hparts.append(const[i, j] * sc)
            # svec rows of -coefficients
            Gblk = sp.lil_matrix((svec_dim(p), k))
            for nme, rows in expr.coeffs.items():
                dense = rows.toarray().reshape(-1, p, p)
                dense = 0.5 * (dense + dense.transpose(0, 2, 1))
                sv = dense[:, i, j] * sc
                Gblk[:, offsets[nme]:offsets[nme] + sv.shape[0]] = -sv.T
            Grows.append(Gblk.tocsr())
            dims.append(p)

        Aparts, bparts = [], []
        for expr in self.equalities:
            p, q = expr.shape
            if p * q == 0:
                continue
            symmetric = (p == q)
            if symmetric:
                asym = np.abs(expr.const - expr.const.T).max() if expr.const.size else 0.0
                Top = _transpose_op(p, p)
                for nme, rows in expr.coeffs.items():
                    d = rows - rows @ Top.T
                    if d.nnz and np.abs(d.data).max() > 1e-12 * max(1.0, np.abs(rows.data).max()):
                        symmetric = False
                        break
                if asym > 1e-12:
                    symmetric = False
            if symmetric:
                i, j, _ = _tri(p)
                sel = i + j * p
            else:
                sel = np.arange(p * q)
            Ablk = sp.lil_matrix((sel.size, k))
            for nme, rows in expr.coeffs.items():
                dense = rows.toarray()[:, sel]
                Ablk[:, offsets[nme]:offsets[nme] + dense.shape[0]] = dense.T
            Aparts.append(Ablk.tocsr())
            bparts.append(-expr.const.flatten(order="F")[sel])

        G = sp.vstack(Grows).tocsc() if Grows else sp.csc_matrix((0, k))
        h = np.concatenate(hparts) if hparts else np.zeros(0)
        A = sp.vstack(Aparts).tocsc() if Aparts else None
        b = np.concatenate(bparts) if bparts else None
        prog = ConicProgram(c=c, G=G, h=h, dims=dims, A=A, b=b)
        prog._offsets = offsets        # used when unpacking solutions
        return prog

    def solve(self, tol: float = 1e-8, max_iter: int = 100,
              verbose: bool = False) -> LmiSolution:
        prog = self.compile()
        report = sdp_solve(prog, tol=tol, max_iter=max_iter, verbose=verbose)
        sol = LmiSolution(report=report)
        if report.x is not None:
            offsets = prog._offsets
            scalars = {}
            for name, var in self.space.items():
                scalars[name] = report.x[offsets[name]:offsets[name] + var.num_scalars]
            sol.values = {name: self.space[name].unpack(scalars[name])
                          for name in self.space}
            assignment = scalars
            for out_name, fn in self.extractors.items():
                sol.values[out_name] = fn(sol.values)
            if self.objective is not None and report.feasible:
                sol.objective = float(report.objective)
            if report.feasible and self.certificate_blocks:
                from .sdp import certify
                blocks = {n: e.value(assignment, self.space)
                          for n, e in self.certificate_blocks.items()}
                sol.certificate = certify(report, blocks, margin=self.margin)
        return sol


def const(mat) -> AffExpr:
    return AffExpr.constant(mat)
