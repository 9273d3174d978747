"""Inner convex approximation of the bilinear synthesis conditions:
psd-convex overestimates, the Schur-expanded convex step, and the
anchor-update iteration loops.

Each iteration solves one SDP whose feasible set is contained in the
original bilinear condition's; substituting the anchors back reproduces the
anchor point, so a feasible warm start keeps every iterate feasible and a
gain objective gives a non-increasing trace.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .conditions import (_phi_ldds, _supply_exprs, ldds_structure,
                         assemble_ldds, assemble_tvd, _tvd_structure)
from .lmi import AffExpr, LmiProblem, bmat, blockdiag, const, hstack
from .systems import LddsPlant, SupplyRate, TvdPlant


def psd_overestimate(omega, omega_anchor, gamma_term, gamma_anchor, t_block, z):
    """Numeric psd-convex overestimate of T + Sy(Omega' Gamma) at an anchor.

    Returns Delta(Omega, Omega~, Gamma, Gamma~); equals T + Sy(Omega' Gamma)
    when the anchors match the arguments, and dominates it whenever
    z dsum (I - z) > 0.
    """
    O = linalg.as_matrix(omega)
    Ot = linalg.as_matrix(omega_anchor)
    G = linalg.as_matrix(gamma_term)
    Gt = linalg.as_matrix(gamma_anchor)
    T = linalg.as_matrix(t_block)
    z = linalg.as_matrix(z)
    n = z.shape[0]
    big = linalg.direct_sum([z, np.eye(n) - z])
    w = np.linalg.eigvalsh(big)
    if w.min() <= 0:
        raise ValueError("need 0 < z < I")
    diff = np.vstack([O - Ot, G - Gt])
    quad = diff.T @ np.linalg.solve(big, diff)
    return quad + linalg.sym(Ot.T @ G + O.T @ Gt - Ot.T @ Gt) + T


def _vec_expr(e: AffExpr) -> AffExpr:
    """Column-major vec of an expression (coefficients are unchanged)."""
    p, q = e.shape
    return AffExpr((p * q, 1), const=e.const.flatten(order="F")[:, None],
                   coeffs=dict(e.coeffs))


def _quad_epigraph(prob: LmiProblem, name: str, expr: AffExpr) -> AffExpr:
    """Scalar t with t >= ||vec(expr)||^2 via a Schur block."""
    t = prob.scalar(name, nonneg=True)
    v = _vec_expr(expr)
    N = v.shape[0]
    prob.psd(bmat([[t, v.T], [v, np.eye(N)]]), name=f"{name}-epigraph")
    return t


@dataclass
class IterationRecord:
    iteration: int
    gamma: float | None
    k_gain: np.ndarray
    step_norm: float
    status: str
    objective: float | None = None


@dataclass
class IterationResult:
    records: list[IterationRecord] = field(default_factory=list)
    k_gain: np.ndarray | None = None
    gamma: float | None = None
    anchors: dict = field(default_factory=dict)

    @property
    def gammas(self):
        return [r.gamma for r in self.records if r.gamma is not None]


def convex_step_ldds(plant: LddsPlant, supply: SupplyRate, p_anchor, q_anchor,
                     k_anchor, rho1: float, rho2: float,
                     include_gamma: bool = True,
                     margin: float = 1e-7) -> LmiProblem:
    """One inner-convex-approximation step for the constant-delay condition.

    Builds the Schur-expanded step LMI around the anchors (P~, Q~, K~) with
    Z a free 0 < Z < I decision variable; the objective is the gain (when
    requested) plus the trace regularization around the anchors.
    """
    st = ldds_structure(plant)
    n, p, d, m, q = plant.n, plant.p, plant.basis.dim, plant.m, plant.q
    dn = d * n
    N = 2 * n + dn + q + m
    Pt = linalg.as_matrix(p_anchor)
    Qt = linalg.as_matrix(q_anchor)
    Kt = linalg.as_matrix(k_anchor)
    prob = LmiProblem(margin=margin)
    j1, j2, j3, jt, gamma = _supply_exprs(prob, supply, include_gamma and supply.gamma_slot)
    j1e = j1 if isinstance(j1, AffExpr) else const(j1)
    j3e = j3 if isinstance(j3, AffExpr) else const(j3)

    P = prob.sym("P", n)
    Q = prob.rect("Q", n, dn)
    R = prob.sym("R", dn)
    S = prob.sym("S", n)
    U = prob.sym("U", n)
    Z = prob.sym("Z", n)
    K = prob.rect("K", p, n)
    pq_block = bmat([[P, Q], [Q.T, R + S.kron_left(st.F)]])
    prob.psd(pq_block, strict=True, name="lkf-positivity")
    prob.psd(S, name="S>=0")
    prob.psd(U, name="U>=0")
    prob.certify_block("lkf-positivity", pq_block)

    Brow = np.hstack([st.B1_row, np.zeros((n, m))])        # maps lifted u to xdot
    B2row = np.hstack([st.B2_row, np.zeros((m, m))])

    def lift(Kobj):
        if isinstance(Kobj, AffExpr):
            return blockdiag([Kobj.kron_left(np.eye(2 + d)),
                              const(np.zeros((q + m, q + m)))])
        return linalg.direct_sum([np.kron(np.eye(2 + d), Kobj),
                                  np.zeros((q + m, q + m))])

    # Phi-hat: open-loop part, affine in all decision variables
    sig_open = st.C_row
    phi = _phi_ldds(prob, plant, st, Q, R, S, U, j1e, j2, j3e, jt, const(sig_open))
    # the output gain enters z through B2 K as well: add Sy(colJ B2 Klift)
    if m:
        colJ = const(np.vstack([np.zeros((2 * n + dn, m)), -j2.T, jt]))
        phi = phi + (lift(K).lmul(colJ.const @ B2row)).sym()
    Pbig = hstack([P, np.zeros((n, n)), Q, np.zeros((n, q + m))])
    phihat = phi + Pbig.T.rmul(np.hstack([st.A_row, np.zeros((n, m))])).sym()

    Ptb = np.hstack([Pt, np.zeros((n, n)), Qt, np.zeros((n, q + m))])
    BKt = Brow @ lift(Kt)
    BK = lift(K).lmul(Brow)
    top = phihat \
        + _expr_matmul_safe(const(Ptb.T), BK).sym() \
        + Pbig.T.rmul(BKt).sym() \
        + const(-linalg.sym(Ptb.T @ BKt))
    off1 = Pbig.T + const(-Ptb.T)
    off2 = BK.T + const(-BKt.T)
    step = bmat([[top, off1, off2],
                 [off1.T, -1.0 * Z, np.zeros((n, n))],
                 [off2.T, np.zeros((n, n)), Z - np.eye(n)]])
    prob.nsd(step, strict=True, name="convex-step")

    lam = hstack([P, Q])
    t1 = _quad_epigraph(prob, "t_lam", lam + const(-np.hstack([Pt, Qt])))
    t2 = _quad_epigraph(prob, "t_k", K + const(-Kt))
    objective = t1 * rho1 + t2 * rho2
    if gamma is not None:
        objective = objective + gamma
    prob.minimize(objective)
    return prob


def _expr_matmul_safe(a, b):
    if isinstance(a, AffExpr) and a.coeffs and isinstance(b, AffExpr) and b.coeffs:
        raise ValueError("bilinear product")
    if isinstance(b, AffExpr) and b.coeffs:
        return b.lmul(a.const if isinstance(a, AffExpr) else a)
    bm = b.const if isinstance(b, AffExpr) else b
    return (a if isinstance(a, AffExpr) else const(a)).rmul(bm)


def run_algorithm_ldds(plant: LddsPlant, supply: SupplyRate, rho1: float = 1e-8,
                       rho2: float = 1e-8, eps: float = 1e-12,
                       max_iter: int = 40, init: str = "auto", k_init=None,
                       alphas=None, include_gamma: bool = True,
                       tol: float = 1e-8, callback=None) -> IterationResult:
    """Anchor-update loop for the constant-delay synthesis condition.

    ``init='auto'`` warm-starts from the projected convex synthesis, then a
    fixed-gain analysis supplies the anchor (P, Q).
    """
    n, p, d = plant.n, plant.p, plant.basis.dim
    if init == "auto":
        alphas = alphas if alphas is not None else np.eye(1, 2 + d, 0).ravel()
        syn = assemble_ldds(plant, supply, mode="synthesis", alphas=alphas)
        sol = syn.solve(tol=tol)
        if not sol.report.feasible:
            raise ValueError("projected synthesis warm start is infeasible")
        K = sol.values["K"]
    else:
        K = linalg.as_matrix(k_init)
    ana = assemble_ldds(plant, supply, mode="analysis", k_gain=K)
    asol = ana.solve(tol=tol)
    if not asol.report.feasible:
        raise ValueError("warm-start gain fails the analysis condition")
    Pt, Qt = asol.values["P"], asol.values["Q"]
    gamma_prev = asol.objective

    result = IterationResult()
    result.records.append(IterationRecord(0, gamma_prev, K.copy(), np.inf, "warm-start"))
    for it in range(1, max_iter + 1):
        step = convex_step_ldds(plant, supply, Pt, Qt, K, rho1, rho2,
                                include_gamma=include_gamma)
        sol = step.solve(tol=tol)
        if not sol.report.feasible:
            result.records.append(IterationRecord(it, None, K.copy(), np.nan,
                                                  f"step-{sol.report.status}"))
            break
        Pn, Qn, Kn = sol.values["P"], sol.values["Q"], sol.values["K"]
        gam = sol.values.get("gamma")
        prev = np.concatenate([Pt.ravel(), Qt.ravel(), K.ravel()])
        new = np.concatenate([Pn.ravel(), Qn.ravel(), Kn.ravel()])
        stepnorm = np.abs(new - prev).max() / (np.abs(prev).max() + 1.0)
        Pt, Qt, K = Pn, Qn, Kn
        result.records.append(IterationRecord(it, gam, K.copy(), stepnorm,
                                              sol.report.status, sol.objective))
        if callback:
            callback(result.records[-1])
        if stepnorm < eps:
            break
    result.k_gain = K
    result.gamma = result.records[-1].gamma
    result.anchors = {"P": Pt, "Q": Qt}
    return result


def recertify_ldds(plant: LddsPlant, supply: SupplyRate, k_gain,
                   tol: float = 1e-8):
    """Fixed-gain analysis of an iterate: returns (feasible, gamma)."""
    prob = assemble_ldds(plant, supply, mode="analysis", k_gain=k_gain)
    sol = prob.solve(tol=tol)
    return sol.report.feasible, sol.objective


# ---------------------------------------------------------------------------
# time-varying-delay variant
# ---------------------------------------------------------------------------


def convex_step_tvd(plant: TvdPlant, supply: SupplyRate, p1_anchor, p2_anchor,
                    k_anchor, rho1: float, rho2: float,
                    include_gamma: bool = True, margin: float = 1e-7) -> LmiProblem:
    """One step of the bounded time-varying-delay iteration."""
    st = _tvd_structure(plant)
    n, p, m, q = plant.n, plant.p, plant.m, plant.q
    d1, d2 = plant.d1, plant.d2
    k1, k2 = plant.kappa1, plant.kappa2
    r1, r2 = plant.r1, plant.r2
    r3 = r2 - r1
    has_r1, has_r2 = st["has_r1"], st["has_r2"]
    widths = st["widths"]
    Nchi = st["Nchi"]
    rho = (d1 + d2) * n
    nblocks = int(has_r1) + int(has_r2) + 1
    nlift = nblocks + k1 + 2 * k2
    P1t = linalg.as_matrix(p1_anchor)
    P2t = linalg.as_matrix(p2_anchor)
    Kt = linalg.as_matrix(k_anchor)

    prob = LmiProblem(margin=margin)
    j1, j2, j3, jt, gamma = _supply_exprs(prob, supply, include_gamma and supply.gamma_slot)
    j1e = j1 if isinstance(j1, AffExpr) else const(j1)
    j3e = j3 if isinstance(j3, AffExpr) else const(j3)
    P1 = prob.sym("P1", n)
    P2 = prob.rect("P2", n, rho)
    P3 = prob.sym("P3", rho)
    Q1 = prob.sym("Q1", n)
    Q2 = prob.sym("Q2", n)
    R1 = prob.sym("R1", n)
    R2 = prob.sym("R2", n)
    Y = prob.rect("Y", n, n)
    Z = prob.sym("Z", n)
    K = prob.rect("K", p, n)
    pos = bmat([[P1, P2], [P2.T, P3 + blockdiag(
        [Q1.kron_left(np.eye(d1)), Q2.kron_left(np.eye(d2))])]])
    prob.psd(pos, strict=True, name="lkf-positivity")
    prob.psd(Q1, name="Q1>=0")
    prob.psd(Q2, name="Q2>=0")
    prob.psd(R1, name="R1>=0")
    prob.psd(bmat([[R2, Y], [Y.T, R2]]), name="split-coupling")

    def commut_pair(Rexpr, Yexpr):
        Kc = linalg.commutation(k2, n)
        inner = bmat([[Rexpr.kron_right(np.eye(k2)), Yexpr.kron_right(np.eye(k2))],
                      [Yexpr.T.kron_right(np.eye(k2)), Rexpr.kron_right(np.eye(k2))]])
        big = linalg.direct_sum([Kc, Kc])
        return inner.lmul(big).rmul(big.T)

    blocks = []
    if has_r1:
        blocks.append(Q1 - Q2 - r3 * R2 if has_r2 else Q1)
    if has_r2:
        blocks.append(Q2)
    xt = -1.0 * (Q1 + r1 * R1)
    if not has_r1 and has_r2:
        xt = xt + (Q1 - Q2 - r3 * R2)
    blocks.append(xt)
    if k1:
        blocks.append(R1.kron_left(np.eye(k1)))
    if k2:
        blocks.append(commut_pair(R2, Y))
    blocks.append(j3e)
    xi = blockdiag(blocks)

    def lift(Kobj):
        if isinstance(Kobj, AffExpr):
            return blockdiag([Kobj.kron_left(np.eye(nlift)),
                              const(np.zeros((q + m, q + m)))])
        return linalg.direct_sum([np.kron(np.eye(nlift), Kobj),
                                  np.zeros((q + m, q + m))])

    Brow = np.hstack([st["B1"], np.zeros((n, m))])
    B2row = np.hstack([st["B2"], np.zeros((m, m))])
    Pbig = hstack([np.zeros((n, widths[0] + widths[1])), P1,
                   P2.rmul(st["Ihat"]), np.zeros((n, q + m))])
    colP2 = bmat([[np.zeros((widths[0] + widths[1], rho))], [P2],
                  [P3.rmul(st["Ihat"]).T], [np.zeros((q + m, rho))]])
    phi = colP2.rmul(np.hstack([st["Fhat"], np.zeros((rho, q + m))])).sym()
    if m:
        colJ = const(np.vstack([np.zeros((Nchi - m - q, m)), -j2.T, jt]))
        phi = phi + _expr_matmul_safe(colJ, np.hstack([st["C"], np.zeros((m, m))])).sym()
        phi = phi + (lift(K).lmul(colJ.const @ B2row)).sym()
    phi = phi - blockdiag([xi, -1.0 * j1e])
    phihat = phi + Pbig.T.rmul(np.hstack([st["A"], np.zeros((n, m))])).sym()

    Ptb = np.hstack([np.zeros((n, widths[0] + widths[1])), P1t,
                     P2t @ st["Ihat"], np.zeros((n, q + m))])
    BKt = Brow @ lift(Kt)
    BK = lift(K).lmul(Brow)
    top = phihat + _expr_matmul_safe(const(Ptb.T), BK).sym() \
        + Pbig.T.rmul(BKt).sym() + const(-linalg.sym(Ptb.T @ BKt))
    off1 = Pbig.T + const(-Ptb.T)
    off2 = BK.T + const(-BKt.T)
    step = bmat([[top, off1, off2],
                 [off1.T, -1.0 * Z, np.zeros((n, n))],
                 [off2.T, np.zeros((n, n)), Z - np.eye(n)]])
    prob.nsd(step, strict=True, name="convex-step")

    lam = hstack([P1, P2])
    t1 = _quad_epigraph(prob, "t_lam", lam + const(-np.hstack([P1t, P2t])))
    t2 = _quad_epigraph(prob, "t_k", K + const(-Kt))
    objective = t1 * rho1 + t2 * rho2
    if gamma is not None:
        objective = objective + gamma
    prob.minimize(objective)
    return prob


def run_algorithm_tvd(plant: TvdPlant, supply: SupplyRate, rho1: float = 1e-8,
                      rho2: float = 1e-8, eps: float = 1e-12, max_iter: int = 40,
                      alphas=None, k_init=None, tol: float = 1e-8,
                      callback=None) -> IterationResult:
    """Anchor-update loop for the bounded time-varying-delay synthesis."""
    nlift = (int(plant.r1 > 0) + int(plant.r2 > plant.r1) + 1
             + plant.kappa1 + 2 * plant.kappa2)
    if k_init is None:
        if alphas is None:
            alphas = np.zeros(nlift)
            alphas[int(plant.r1 > 0) + int(plant.r2 > plant.r1)] = 0.5
        syn = assemble_tvd(plant, supply, mode="synthesis", alphas=alphas)
        sol = syn.solve(tol=tol)
        if not sol.report.feasible:
            raise ValueError("projected synthesis warm start is infeasible")
        K = sol.values["K"]
    else:
        K = linalg.as_matrix(k_init)
    ana = assemble_tvd(plant, supply, mode="analysis", k_gain=K)
    asol = ana.solve(tol=tol)
    if not asol.report.feasible:
        raise ValueError("warm-start gain fails the analysis condition")
    P1t, P2t = asol.values["P1"], asol.values["P2"]
    result = IterationResult()
    result.records.append(IterationRecord(0, asol.objective, K.copy(), np.inf,
                                          "warm-start"))
    for it in range(1, max_iter + 1):
        step = convex_step_tvd(plant, supply, P1t, P2t, K, rho1, rho2)
        sol = step.solve(tol=tol)
        if not sol.report.feasible:
            result.records.append(IterationRecord(it, None, K.copy(), np.nan,
                                                  f"step-{sol.report.status}"))
            break
        P1n, P2n, Kn = sol.values["P1"], sol.values["P2"], sol.values["K"]
        gam = sol.values.get("gamma")
        prev = np.concatenate([P1t.ravel(), P2t.ravel(), K.ravel()])
        new = np.concatenate([P1n.ravel(), P2n.ravel(), Kn.ravel()])
        stepnorm = np.abs(new - prev).max() / (np.abs(prev).max() + 1.0)
        P1t, P2t, K = P1n, P2n, Kn
        result.records.append(IterationRecord(it, gam, K.copy(), stepnorm,
                                              sol.report.status, sol.objective))
        if callback:
            callback(result.records[-1])
        if stepnorm < eps:
            break
    result.k_gain = K
    result.gamma = result.records[-1].gamma
    result.anchors = {"P1": P1t, "P2": P2t}
    return result
