"""Dense primal-dual interior-point solver for semidefinite programs.

Problems arrive in linear-matrix-inequality form

    minimize    c' x
    subject to  F0_k + sum_i x_i Fi_k  >= 0   (one PSD block per k)
                A x = b                        (optional equalities)

which is the conic program  min c'x  s.t.  G x + s = h,  A x = b,  s in K
with K a product of PSD cones.  The algorithm is a homogeneous self-dual
embedding with Nesterov-Todd scaling and a Mehrotra predictor-corrector,
so infeasibility is reported through a Farkas certificate rather than by
divergence heuristics.  Everything is deterministic: fixed initialization,
no randomized pivoting.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

# ---------------------------------------------------------------------------
# svec utilities (scaled vectorization of symmetric matrices)
# ---------------------------------------------------------------------------

_SQRT2 = np.sqrt(2.0)


def svec_dim(p: int) -> int:
    return p * (p + 1) // 2


def _tri_indices(p: int):
    # lower triangle, column-major: (0,0),(1,0),...,(p-1,0),(1,1),...
    jj, ii = np.meshgrid(np.arange(p), np.arange(p))
    mask = ii >= jj
    order = np.lexsort((ii[mask], jj[mask]))
    return ii[mask][order], jj[mask][order]


_TRI_CACHE: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}


def _tri(p: int):
    if p not in _TRI_CACHE:
        i, j = _tri_indices(p)
        scale = np.where(i == j, 1.0, _SQRT2)
        _TRI_CACHE[p] = (i, j, scale)
    return _TRI_CACHE[p]


def svec(x: np.ndarray) -> np.ndarray:
    p = x.shape[0]
    i, j, s = _tri(p)
    return x[i, j] * s


def smat(v: np.ndarray, p: int) -> np.ndarray:
    i, j, s = _tri(p)
    x = np.zeros((p, p))
    vals = np.asarray(v) / s
    x[i, j] = vals
    x[j, i] = vals
    return x


def _smat_batch(V: np.ndarray, p: int) -> np.ndarray:
    """(N, svec_dim) -> (N, p, p)."""
    i, j, s = _tri(p)
    N = V.shape[0]
    X = np.zeros((N, p, p))
    vals = V / s
    X[:, i, j] = vals
    X[:, j, i] = vals
    return X


def _svec_batch(X: np.ndarray) -> np.ndarray:
    p = X.shape[1]
    i, j, s = _tri(p)
    return X[:, i, j] * s


# ---------------------------------------------------------------------------
# Problem container
# ---------------------------------------------------------------------------


@dataclass
class ConicProgram:
    """Scalarized SDP: min c'x s.t. h - G x in K, A x = b.

    ``dims`` lists the PSD block orders; rows of G/h hold the svec of each
    block stacked in order.  Size-1 blocks are plain scalar inequalities.
    """

    c: np.ndarray
    G: sp.csc_matrix
    h: np.ndarray
    dims: list[int]
    A: sp.csc_matrix | None = None
    b: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        self.h = np.asarray(self.h, dtype=float).ravel()
        total = sum(svec_dim(p) for p in self.dims)
        if self.G.shape != (total, self.c.size):
            raise ValueError(f"G shape {self.G.shape} != ({total}, {self.c.size})")
        if not np.isfinite(self.h).all() or not np.isfinite(self.c).all():
            raise ValueError("non-finite problem data")
        if self.A is not None:
            self.b = np.asarray(self.b, dtype=float).ravel()
            if self.A.shape != (self.b.size, self.c.size):
                raise ValueError("A/b dimension mismatch")

    @property
    def num_vars(self) -> int:
        return self.c.size

    def block_slices(self):
        out = []
        start = 0
        for p in self.dims:
            out.append((p, slice(start, start + svec_dim(p))))
            start += svec_dim(p)
        return out

    def constraint_matrices(self, k: int):
        """Return (F0, [F1..Fm]) dense matrices of block k (LMI orientation)."""
        p, sl = self.block_slices()[k]
        F0 = smat(self.h[sl], p)
        Gd = np.asarray(self.G[sl, :].todense())
        Fis = [smat(-Gd[:, i], p) for i in range(self.num_vars)]
        return F0, Fis


@dataclass
class SolveReport:
    status: str                      # optimal | feasible | infeasible | numerical-failure
    x: np.ndarray | None = None
    objective: float | None = None
    kkt_residual: float = np.inf
    block_min_eigs: list[float] = field(default_factory=list)
    iterations: int = 0
    gap: float = np.inf
    message: str = ""

    @property
    def feasible(self) -> bool:
        return self.status in ("optimal", "feasible")


# ---------------------------------------------------------------------------
# Solver
# ---------------------------------------------------------------------------


class _Scaling:
    """Nesterov-Todd scaling data for one PSD block."""

    __slots__ = ("r", "rinv", "lam")

    def __init__(self, s_mat: np.ndarray, z_mat: np.ndarray):
        Ls = np.linalg.cholesky(s_mat)
        Lz = np.linalg.cholesky(z_mat)
        U, sig, Vt = np.linalg.svd(Lz.T @ Ls)
        self.lam = sig                       # scaled point (diagonal)
        self.r = Ls @ Vt.T / np.sqrt(sig)    # r^{-1} s r^{-T} = diag(lam) = r^T z r
        self.rinv = sla.solve_triangular(Ls, Vt.T * np.sqrt(sig), lower=True,
                                         trans="T").T


def _max_step(lam: np.ndarray, d_scaled: np.ndarray) -> float:
    """Largest a with diag(lam) + a*d_scaled >= 0 (d in scaled coordinates)."""
    half = 1.0 / np.sqrt(lam)
    m = float(np.linalg.eigvalsh(half[:, None] * d_scaled * half[None, :]).min())
    return np.inf if m >= 0 else -1.0 / m


def _equilibrate(prog: ConicProgram, sweeps: int = 3):
    """Ruiz-style scaling: scalar congruence per block, diagonal per column.

    Returns (scaled program, column scale d) with x_original = d * x_scaled.
    Block-scalar row scaling keeps every PSD block a PSD block.
    """
    G = prog.G.tocsr(copy=True).astype(float)
    h = prog.h.copy()
    c = prog.c.copy()
    A = prog.A.tocsr(copy=True).astype(float) if prog.A is not None else None
    b = prog.b.copy() if prog.b is not None else None
    k = prog.num_vars
    d = np.ones(k)
    blocks = prog.block_slices()
    for _ in range(sweeps):
        for p, sl in blocks:
            rows = G[sl, :]
            scale = max(np.abs(rows.data).max() if rows.nnz else 0.0,
                        np.abs(h[sl]).max() if h[sl].size else 0.0)
            if scale > 0:
                G[sl, :] = rows / scale
                h[sl] /= scale
        if A is not None and A.shape[0]:
            for i in range(A.shape[0]):
                row = A[i, :]
                scale = max(np.abs(row.data).max() if row.nnz else 0.0, abs(b[i]))
                if scale > 0:
                    A[i, :] = row / scale
                    b[i] /= scale
        Gc = G.tocsc()
        Ac = A.tocsc() if A is not None else None
        for i in range(k):
            col = Gc[:, i]
            cm = np.abs(col.data).max() if col.nnz else 0.0
            if Ac is not None and Ac.shape[0]:
                ac = Ac[:, i]
                cm = max(cm, np.abs(ac.data).max() if ac.nnz else 0.0)
            if cm > 0:
                s = np.sqrt(cm)
                Gc[:, i] = col / s
                if Ac is not None:
                    Ac[:, i] = Ac[:, i] / s
                d[i] /= s
        G = Gc.tocsr()
        A = Ac.tocsr() if Ac is not None else None
    scaled = ConicProgram(c=c * d, G=G.tocsc(), h=h, dims=list(prog.dims),
                          A=A.tocsc() if A is not None else None, b=b)
    return scaled, d


def solve(prog: ConicProgram, tol: float = 1e-8, max_iter: int = 100,
          verbose: bool = False, equilibrate: bool = True) -> SolveReport:
    """Solve the program; returns a SolveReport with a status and diagnostics."""
    if equilibrate and prog.num_vars:
        scaled, dcol = _equilibrate(prog)
        rep = solve(scaled, tol=tol, max_iter=max_iter, verbose=verbose,
                    equilibrate=False)
        if rep.x is not None:
            x = dcol * rep.x
            rep.x = x
            rep.objective = float(prog.c @ x)
            vals = [np.linalg.eigvalsh(smat((prog.h - prog.G @ x)[sl], p))
                    for p, sl in prog.block_slices()]
            rep.block_min_eigs = [float(v.min()) for v in vals]
            cone_viol = max(0.0, -min((v.min() for v in vals), default=0.0))
            eq_viol = np.linalg.norm(prog.A @ x - prog.b) if prog.A is not None else 0.0
            rep.kkt_residual = max(cone_viol, eq_viol)
        return rep
    k = prog.num_vars
    blocks = prog.block_slices()
    nu = sum(p for p, _ in blocks) + 1
    c, h = prog.c, prog.h
    G = prog.G.tocsc()
    A = prog.A.tocsc() if prog.A is not None else sp.csc_matrix((0, k))
    b = prog.b if prog.b is not None else np.zeros(0)
    neq = A.shape[0]

    if k == 0 and neq == 0:
        eigs = [float(np.linalg.eigvalsh(smat(h[sl], p)).min()) if p > 1 else float(h[sl][0])
                for p, sl in blocks]
        feas = all(e >= -tol for e in eigs)
        return SolveReport(status="feasible" if feas else "infeasible",
                           x=np.zeros(0), objective=0.0, kkt_residual=0.0,
                           block_min_eigs=eigs)

    # per-block active variable columns (for the Schur assembly)
    Gcsr = G.tocsr()
    block_cols = []
    for p, sl in blocks:
        sub = Gcsr[sl, :].tocsc()
        act = np.flatnonzero(np.diff(sub.indptr)) if sub.nnz else np.zeros(0, dtype=int)
        block_cols.append((sub, act))

    def cone_smat(v):
        return [smat(v[sl], p) for p, sl in blocks]

    def cone_svec(mats):
        return np.concatenate([svec(m) for m in mats]) if mats else np.zeros(0)

    # iterates
    x = np.zeros(k)
    y = np.zeros(neq)
    s_mats = [np.eye(p) for p, _ in blocks]
    z_mats = [np.eye(p) for p, _ in blocks]
    tau, kappa = 1.0, 1.0

    resx0 = max(1.0, np.linalg.norm(c))
    resy0 = max(1.0, np.linalg.norm(b))
    resz0 = max(1.0, np.linalg.norm(h))

    best_x, best_merit = None, np.inf

    def kkt_residual(xv):
        vals = [np.linalg.eigvalsh(m) for m in cone_smat(h - G @ xv)] or [np.zeros(1)]
        cone_viol = max(0.0, -min(v.min() for v in vals))
        eq_viol = np.linalg.norm(A @ xv - b) if neq else 0.0
        return max(cone_viol, eq_viol)

    status, message = "numerical-failure", "iteration limit reached"
    it = 0
    for it in range(1, max_iter + 1):
        s_vec = cone_svec(s_mats)
        z_vec = cone_svec(z_mats)
        # residuals of the self-dual embedding
        rx = A.T @ y + G.T @ z_vec + c * tau
        ry = A @ x - b * tau
        rz = G @ x + s_vec - h * tau
        rt = kappa + c @ x + b @ y + h @ z_vec
        gap = (s_vec @ z_vec + tau * kappa) / nu

        # convergence bookkeeping (in the de-homogenized points)
        pcost = c @ x / tau
        dcost = -(h @ z_vec + b @ y) / tau
        relgap = abs(pcost - dcost) / max(1.0, abs(pcost))
        pres = max(np.linalg.norm(ry), np.linalg.norm(rz)) / (tau * resz0)
        dres = np.linalg.norm(rx - c * tau + c * tau) / (tau * resx0)
        dres = np.linalg.norm(A.T @ y + G.T @ z_vec + c * tau) / (tau * resx0)
        if verbose:
            print(f"  it {it:3d}: pcost {pcost: .6e} gap {gap:.2e} pres {pres:.2e} "
                  f"dres {dres:.2e} tau {tau:.2e} kappa {kappa:.2e}")
        merit = max(pres, dres) + min(gap / tau**2, relgap)
        if merit < best_merit and tau > 1e-8:
            best_merit, best_x = merit, x / tau
        if pres <= tol and dres <= tol and (gap / tau**2 <= tol * 10 or relgap <= tol * 10):
            status = "optimal" if np.any(c) else "feasible"
            message = "converged"
            x_sol = x / tau
            break
        # infeasibility certificates (scale invariant)
        ctol = max(100 * tol, 1e-7)
        hz_by = h @ z_vec + b @ y
        if hz_by < 0 and np.linalg.norm(A.T @ y + G.T @ z_vec) <= ctol * (-hz_by):
            status, message = "infeasible", "primal infeasibility certificate"
            x_sol = None
            break
        cx = c @ x
        if cx < 0:
            # dual infeasibility: G x + s = 0 for some s in K, A x = 0, c'x < 0
            s_cand = cone_smat(-G @ x)
            mineig = min((np.linalg.eigvalsh(m).min() for m in s_cand), default=0.0)
            if mineig >= -ctol * (-cx) and (np.linalg.norm(A @ x) if neq else 0.0) <= ctol * (-cx):
                status, message = "infeasible", "dual infeasibility certificate (unbounded objective)"
                x_sol = None
                break
        # stall detection: tau collapsing while kappa stays bounded away from 0
        if tau <= 1e-10 * max(1.0, kappa):
            if hz_by < 0 and np.linalg.norm(A.T @ y + G.T @ z_vec) <= 1e-4 * (-hz_by):
                status, message = "infeasible", "primal infeasibility (weak certificate at stall)"
                x_sol = None
            else:
                status, message = "numerical-failure", "tau collapsed without certificate"
                x_sol = None
            break

        # Nesterov-Todd scaling
        try:
            scalings = [_Scaling(s_mats[i], z_mats[i]) for i in range(len(blocks))]
        except np.linalg.LinAlgError:
            status, message = "numerical-failure", "scaling factorization failed"
            x_sol = x / tau
            break
        wtau = np.sqrt(kappa / tau)
        lam_tk = np.sqrt(tau * kappa)

        # Schur complement H = G' (W'W)^{-1} G and the saddle factorization
        H = np.zeros((k, k))
        Ms = []
        for (p, sl), (sub, act), sc in zip(blocks, block_cols, scalings):
            if act.size == 0:
                Ms.append(None)
                continue
            cols = np.asarray(sub[:, act].todense()).T          # (na, svec)
            Vs = _smat_batch(cols, p)
            T = np.einsum("ij,njk,lk->nil", sc.rinv, Vs, sc.rinv, optimize=True)
            M = _svec_batch(T)                                   # rows: scaled cols
            Ms.append((act, M))
            H[np.ix_(act, act)] += M @ M.T

        sysdim = k + neq
        KKT = np.zeros((sysdim, sysdim))
        KKT[:k, :k] = H
        if neq:
            Ad = np.asarray(A.todense())
            KKT[:k, k:] = Ad.T
            KKT[k:, :k] = Ad
        # light Tikhonov regularization keeps the factorization alive near the end
        reg = 1e-14 * max(1.0, np.abs(H).max() if H.size else 1.0)
        KKT[:k, :k] += reg * np.eye(k)
        if neq:
            KKT[k:, k:] -= reg * np.eye(neq)
        try:
            lu = sla.lu_factor(KKT)
        except (ValueError, np.linalg.LinAlgError):
            status, message = "numerical-failure", "KKT factorization failed"
            x_sol = x / tau
            break

        def apply_wtw_inv(vvec):
            """(W'W)^{-1} v per block, svec coordinates."""
            out = np.zeros_like(vvec)
            for (p, sl), sc in zip(blocks, scalings):
                Vm = smat(vvec[sl], p)
                Rm = sc.rinv.T @ (sc.rinv @ Vm @ sc.rinv.T) @ sc.rinv
                out[sl] = svec(Rm)
            return out

        def kkt_solve(bx, by, bz):
            """Solve the reduced system; returns (dx, dy, dz)."""
            rhs = np.empty(sysdim)
            rhs[:k] = bx + G.T @ apply_wtw_inv(bz)
            rhs[k:] = by
            sol = sla.lu_solve(lu, rhs)
            for _ in range(2):       # iterative refinement
                res = np.empty(sysdim)
                res[:k] = rhs[:k] - (H @ sol[:k] + (A.T @ sol[k:] if neq else 0.0)) \
                    - reg * sol[:k]
                res[k:] = by - A @ sol[:k] if neq else np.zeros(0)
                if np.linalg.norm(res) <= 1e-14 * max(1.0, np.linalg.norm(rhs)):
                    break
                sol = sol + sla.lu_solve(lu, res)
            dz = apply_wtw_inv(G @ sol[:k] - bz)
            return sol[:k], sol[k:], dz

        # dtau coefficient system
        p1, q1, r1 = kkt_solve(-c, b, h)
        denom = (c @ p1 + b @ q1 + h @ r1) - kappa / tau

        def direction(bx, by, bz_raw, bt, dS_scaled, bk):
            """Assemble a Newton direction from the target right-hand sides.

            dS_scaled holds per-block matrices D with lam o (dz~ + ds~) = D.
            """
            bz_mod = np.zeros_like(bz_raw)
            ds_part = []
            for (p, sl), sc in zip(blocks, scalings):
                lam = sc.lam
                D = dS_scaled.pop(0)
                Lp = (lam[:, None] + lam[None, :]) / 2.0
                ds_t = D / Lp                      # L_lam^{-1}(D)
                ds_part.append(ds_t)
                # bz' = bz_raw - W^T(L^{-1} D)
                bz_mod[sl] = bz_raw[sl] - svec(sc.r @ ds_t @ sc.r.T)
            u, v, w = kkt_solve(bx, by, bz_mod)
            dtau = (bt - bk / tau - (c @ u + b @ v + h @ w)) / denom
            dx = u + dtau * p1
            dy = v + dtau * q1
            dz = w + dtau * r1
            ds_mats, dz_mats = [], []
            for (p, sl), sc, ds_t in zip(blocks, scalings, ds_part):
                dz_m = smat(dz[sl], p)
                dz_scaled = sc.r.T @ dz_m @ sc.r
                ds_scaled = ds_t - dz_scaled
                ds_mats.append(sc.r @ ds_scaled @ sc.r.T)
                dz_mats.append((dz_scaled, ds_scaled, dz_m))
            dkappa = (bk - kappa * dtau) / tau
            return dx, dy, dz, dz_mats, ds_mats, dtau, dkappa

        # predictor (affine) direction
        dS0 = [-np.diag(sc.lam**2) for sc in scalings]
        bk0 = -tau * kappa
        aff = direction(-rx, -ry, -rz, -rt, list(dS0), bk0)
        dxa, dya, dza, dzs_a, dss_a, dta, dka = aff

        # affine step length
        alpha = 1.0
        for sc, (dz_sc, ds_sc, _) in zip(scalings, dzs_a):
            alpha = min(alpha, _max_step(sc.lam, dz_sc), _max_step(sc.lam, ds_sc))
        if dta < 0:
            alpha = min(alpha, -tau / dta)
        if dka < 0:
            alpha = min(alpha, -kappa / dka)
        sigma = min(1.0, max(0.0, 1.0 - alpha)) ** 3

        # combined direction with Mehrotra correction
        mu_target = sigma * gap
        dS1 = []
        for sc, (dz_sc, ds_sc, _) in zip(scalings, dzs_a):
            corr = 0.5 * (ds_sc @ dz_sc + dz_sc @ ds_sc)
            dS1.append(mu_target * np.eye(len(sc.lam)) - np.diag(sc.lam**2) - corr)
        bk1 = mu_target - tau * kappa - dta * dka
        f = 1.0 - sigma
        comb = direction(-f * rx, -f * ry, -f * rz, -f * rt, dS1, bk1)
        dx, dy, dz, dz_mats, ds_mats, dtau, dkappa = comb

        alpha = 1.0
        for sc, (dz_sc, ds_sc, _) in zip(scalings, dz_mats):
            alpha = min(alpha, _max_step(sc.lam, dz_sc), _max_step(sc.lam, ds_sc))
        if dtau < 0:
            alpha = min(alpha, -tau / dtau)
        if dkappa < 0:
            alpha = min(alpha, -kappa / dkappa)
        alpha = min(1.0, 0.99 * alpha)
        if not np.isfinite(alpha) or alpha <= 1e-14:
            status, message = "numerical-failure", "step length collapsed"
            x_sol = x / tau
            break

        x = x + alpha * dx
        y = y + alpha * dy
        for i, (p, sl) in enumerate(blocks):
            s_mats[i] = s_mats[i] + alpha * ds_mats[i]
            z_mats[i] = z_mats[i] + alpha * smat(dz[sl], p)
            s_mats[i] = 0.5 * (s_mats[i] + s_mats[i].T)
            z_mats[i] = 0.5 * (z_mats[i] + z_mats[i].T)
        tau += alpha * dtau
        kappa += alpha * dkappa
    else:
        x_sol = x / tau if tau > 1e-10 else None

    if status in ("optimal", "feasible") and x_sol is not None:
        eigs = [float(np.linalg.eigvalsh(m).min()) for m in cone_smat(h - G @ x_sol)]
        rep = SolveReport(status=status, x=x_sol, objective=float(c @ x_sol),
                          kkt_residual=kkt_residual(x_sol),
                          block_min_eigs=eigs, iterations=it,
                          gap=float(gap / tau**2), message=message)
        return rep
    if status == "infeasible":
        return SolveReport(status="infeasible", iterations=it, message=message)
    # numerical failure: report the best de-homogenized point seen
    rep = SolveReport(status="numerical-failure", iterations=it, message=message)
    for cand in (x_sol, best_x):
        if cand is None:
            continue
        resid = kkt_residual(cand)
        if resid < rep.kkt_residual:
            rep.x = cand
            rep.objective = float(c @ cand)
            rep.kkt_residual = resid
    if rep.x is not None and rep.kkt_residual <= 100 * tol:
        rep.status = "optimal" if np.any(c) else "feasible"
        rep.message = "loose convergence (residual within 100x tol)"
        rep.block_min_eigs = [float(np.linalg.eigvalsh(m).min())
                              for m in cone_smat(h - G @ rep.x)]
    return rep


def certify(report: SolveReport, value_blocks: dict[str, np.ndarray],
            margin: float = 0.0, threshold: float = 1e-10) -> dict:
    """Strict-positivity certificate for the PSD-constrained variable blocks.

    ``value_blocks`` maps names to the solved symmetric matrices that theory
    requires to be PD.  After removing the feasibility margin, every block
    must keep its minimum eigenvalue above ``threshold`` (relative to its
    norm); otherwise the result is downgraded to "marginal".
    """
    if not report.feasible:
        return {"status": "not-feasible", "blocks": {}}
    out, status = {}, "strict"
    for name, val in value_blocks.items():
        val = np.atleast_2d(np.asarray(val, dtype=float))
        if val.size == 0:
            continue
        w = np.linalg.eigvalsh(0.5 * (val + val.T))
        m = float(w.min()) - margin
        out[name] = m
        scale = max(1.0, float(np.abs(w).max()))
        if m <= threshold * scale:
            status = "marginal"
    return {"status": status, "blocks": out}
