"""LMI assemblies for the delay-system dissipativity theorems.

Each ``assemble_*`` function builds an :class:`~delaycert.lmi.LmiProblem`
holding the decision variables, the PSD/NSD constraints and (for gain-type
supply rates) the scalar objective.  Analysis problems are affine in every
decision variable; synthesis problems use the projected convex forms with
the controller recovered as K = V X^-1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .basis import KernelBasis, WeightFunction, gram, integrate_matrix, approximate
from .lmi import AffExpr, LmiProblem, bmat, blockdiag, const, hstack, vstack
from .systems import (CddsPlant, CddsSingle, LddsPlant, SupplyRate, TvdPlant,
                      UncertainBlock)


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------


def _supply_exprs(prob: LmiProblem, supply: SupplyRate, minimize: bool):
    """(J1, J2, J3, Jt, gamma) with J1/J3 affine in a fresh gamma when requested."""
    m, q = supply.m, supply.q
    if minimize and supply.gamma_slot:
        gamma = prob.scalar("gamma", nonneg=True, floor=1e-9)
        j1 = gamma.kron_right(-np.eye(m)) if m else const(np.zeros((0, 0)))
        j3 = gamma.kron_right(np.eye(q)) if q else const(np.zeros((0, 0)))
        prob.minimize(gamma)
        return j1, supply.j2, j3, supply.jt, gamma
    return (const(supply.j1), supply.j2, const(supply.j3), supply.jt, None)


def _bessel_gram(basis: KernelBasis, weight: WeightFunction | None = None):
    """Inverse Gram F with F^-1 = int w f f' (the matrix called F in Ch.2)."""
    return gram(basis, weight).f_mat


# ---------------------------------------------------------------------------
# Chapter 2: LDDS analysis and synthesis
# ---------------------------------------------------------------------------


@dataclass
class LddsStructure:
    """Constant blocks shared by the Ch.2-style conditions."""

    F: np.ndarray               # inverse Gram (d x d)
    Fmat: np.ndarray            # [F(0), -F(-r), -M kron I, 0_q] (dn x (2n+dn+q))
    A_row: np.ndarray           # [A1 A2 A3 D1]
    B1_row: np.ndarray
    C_row: np.ndarray
    B2_row: np.ndarray


def ldds_structure(plant: LddsPlant) -> LddsStructure:
    n, d, q = plant.n, plant.basis.dim, plant.q
    f0 = plant.basis(0.0)
    fr = plant.basis(-plant.r)
    Fmat = np.hstack([np.kron(f0[:, None], np.eye(n)),
                      -np.kron(fr[:, None], np.eye(n)),
                      -np.kron(plant.basis.companion, np.eye(n)),
                      np.zeros((d * n, q))])
    return LddsStructure(
        F=_bessel_gram(plant.basis),
        Fmat=Fmat,
        A_row=np.hstack([plant.A1, plant.A2, plant.A3, plant.D1]),
        B1_row=np.hstack([plant.B1, plant.B2, plant.B3, np.zeros((n, q))]),
        C_row=np.hstack([plant.C1, plant.C2, plant.C3, plant.D2]),
        B2_row=np.hstack([plant.B4, plant.B5, plant.B6, np.zeros((plant.m, q))]),
    )


def _phi_ldds(prob, plant, st: LddsStructure, Q, R, S, U, j1, j2, j3, jt,
              sigma_row):
    """The Phi block of (2.30)/(2.46): common to analysis and synthesis.

    ``sigma_row`` is the (m x (2n+dn+q)) output row (expression or constant).
    """
    n, d, m, q = plant.n, plant.basis.dim, plant.m, plant.q
    r = plant.r
    dn = d * n
    # Sy( col(Q; 0; R; 0) [Fmat, 0_m] )
    colQR = bmat([[Q], [np.zeros((n, dn))], [R], [np.zeros((q + m, dn))]])
    frow = np.hstack([st.Fmat, np.zeros((dn, m))])
    phi = colQR.rmul(frow).sym()
    # diagonal (S + rU) + (-S) + (-F kron U) + (-J3) + J1
    phi = phi + blockdiag([S + r * U, -1.0 * S, U.kron_left(-st.F), -1.0 * j3, j1])
    if m:
        # Sy( col(0; -J2'; Jt) [Sigma, 0_m] ): supply-rate coupling
        colJ = const(np.vstack([np.zeros((2 * n + dn, m)), -j2.T, jt]))
        srow = hstack([sigma_row, np.zeros((m, m))])
        phi = phi + _expr_matmul(colJ, srow).sym()
    return phi


def _expr_matmul(a: AffExpr, b: AffExpr) -> AffExpr:
    """Product of two expressions, at most one of which carries variables."""
    if a.coeffs and b.coeffs:
        raise ValueError("product of two variable expressions is not affine")
    if b.coeffs:
        return b.lmul(a.const)
    return a.rmul(b.const)


def assemble_ldds(plant: LddsPlant, supply: SupplyRate, mode: str = "analysis",
                  k_gain=None, alphas=None, minimize_gamma: bool | None = None,
                  margin: float = 1e-7) -> LmiProblem:
    """Dissipative stability/synthesis conditions for a constant-delay LDDS.

    mode="analysis": gain fixed (possibly zero); variables (P, Q, R, S, U).
    mode="synthesis": projected convex condition with slack X, V; the gain is
    recovered through the K = V X^-1 extractor and a real alpha per state
    block steers the projection.
    """
    if supply.m != plant.m or supply.q != plant.q:
        raise ValueError("supply-rate dimensions do not match the plant")
    st = ldds_structure(plant)
    n, p, d, m, q = plant.n, plant.p, plant.basis.dim, plant.m, plant.q
    dn = d * n
    N = 2 * n + dn + q + m
    prob = LmiProblem(margin=margin)
    if minimize_gamma is None:
        minimize_gamma = supply.gamma_slot and m > 0
    j1, j2, j3, jt, gamma = _supply_exprs(prob, supply, minimize_gamma)
    j3e = j3 if isinstance(j3, AffExpr) else const(j3)
    j1e = j1 if isinstance(j1, AffExpr) else const(j1)

    if mode == "analysis":
        K = np.zeros((p, n)) if k_gain is None else linalg.as_matrix(k_gain)
        P = prob.sym("P", n)
        Q = prob.rect("Q", n, dn)
        R = prob.sym("R", dn)
        S = prob.sym("S", n)
        U = prob.sym("U", n)
        lift = linalg.direct_sum([np.kron(np.eye(2 + d), K), np.zeros((q, q))])
        Acl = st.A_row + st.B1_row @ lift
        Sig = st.C_row + st.B2_row @ lift
        # (2.29)
        pq_block = bmat([[P, Q], [Q.T, R + S.kron_left(st.F)]])
        prob.psd(pq_block, strict=True, name="lkf-positivity")
        prob.psd(S, name="S>=0")
        prob.psd(U, name="U>=0")
        prob.certify_block("lkf-positivity", pq_block)
        prob.certify_block("S", S)
        prob.certify_block("U", U)
        # (2.30): Phi + Sy(P' Pi) < 0
        phi = _phi_ldds(prob, plant, st, Q, R, S, U, j1e, j2, j3e, jt, const(Sig))
        Pbig = hstack([P, np.zeros((n, n)), Q, np.zeros((n, q + m))])
        Pi = np.hstack([Acl, np.zeros((n, m))])
        lmi = phi + Pbig.T.rmul(Pi).sym()
        prob.nsd(lmi, strict=True, name="dissipation")
        prob.meta = {"mode": "analysis", "K": K}
        return prob

    if mode != "synthesis":
        raise ValueError("mode must be 'analysis' or 'synthesis'")
    alphas = np.zeros(2 + d) if alphas is None else np.asarray(alphas, dtype=float)
    if alphas.shape != (2 + d,):
        raise ValueError(f"need {2 + d} alpha values")
    Pd = prob.sym("P", n)
    X = prob.rect("X", n, n)
    V = prob.rect("V", p, n)
    Qd = prob.rect("Q", n, dn)
    Rd = prob.sym("R", dn)
    Sd = prob.sym("S", n)
    Ud = prob.sym("U", n)
    prob.psd(Sd, strict=True, name="S>0")
    prob.psd(Ud, strict=True, name="U>0")
    pq_block = bmat([[Pd, Qd], [Qd.T, Rd + Sd.kron_left(st.F)]])
    prob.psd(pq_block, strict=True, name="lkf-positivity")
    prob.certify_block("lkf-positivity", pq_block)
    prob.certify_block("S", Sd)
    prob.certify_block("U", Ud)

    # Pi-dot = [A1 X + B1 V, A2 X + B2 V, A3 (I_d kron X) + B3 (I_d kron V), D1, 0_m]
    AX = [X.lmul(plant.A1) + V.lmul(plant.B1),
          X.lmul(plant.A2) + V.lmul(plant.B2),
          X.kron_left(np.eye(d)).lmul(plant.A3) + V.kron_left(np.eye(d)).lmul(plant.B3),
          const(plant.D1), const(np.zeros((n, m)))]
    pi_dot = hstack(AX)
    sig_dot = hstack([X.lmul(plant.C1) + V.lmul(plant.B4),
                      X.lmul(plant.C2) + V.lmul(plant.B5),
                      X.kron_left(np.eye(d)).lmul(plant.C3) + V.kron_left(np.eye(d)).lmul(plant.B6),
                      const(plant.D2)])
    phi_dot = _phi_ldds(prob, plant, st, Qd, Rd, Sd, Ud, j1e, j2, j3e, jt, sig_dot)
    p_dot = hstack([Pd, np.zeros((n, n)), Qd, np.zeros((n, q + m))])
    inner = bmat([[np.zeros((n, n)), p_dot], [p_dot.T, phi_dot]])
    col = np.vstack([np.eye(n)] + [a * np.eye(n) for a in alphas]
                    + [np.zeros((q + m, n))])
    row = hstack([-1.0 * X, pi_dot])
    theta = row.lmul(col).sym() + inner
    prob.nsd(theta, strict=True, name="projected-synthesis")

    def extract_k(values):
        return values["V"] @ np.linalg.inv(values["X"])

    prob.extractors["K"] = extract_k
    prob.meta = {"mode": "synthesis", "alphas": alphas}
    return prob


# ---------------------------------------------------------------------------
# Uncertain LDDS: full-block-scaled linear-fractional uncertainty channels
# ---------------------------------------------------------------------------

#: slot order of the uncertainty channels: state equation then output equation
UNCERTAINTY_SLOTS = ("A1", "B1", "A2", "B2", "A3", "B3", "D1",
                     "C1", "B4", "C2", "B5", "C3", "B6", "D2")


def _sorted_blocks(blocks):
    for b in blocks:
        if b.slot not in UNCERTAINTY_SLOTS:
            raise ValueError(f"unknown uncertainty slot {b.slot!r}")
    return sorted(blocks, key=lambda b: UNCERTAINTY_SLOTS.index(b.slot))


def _stack_scaling(blocks):
    """Direct sums (F, Xi, Lam, Gam) over the active channels in slot order."""
    F = linalg.direct_sum([b.F for b in blocks])
    Xi = linalg.direct_sum([b.Xi for b in blocks])
    Lam = linalg.direct_sum([b.Lam for b in blocks])
    Gam = linalg.direct_sum([b.Gam for b in blocks])
    return F, Xi, Lam, Gam


def _scal_mul(scal: AffExpr, M) -> AffExpr:
    """scalar expression times a constant matrix."""
    M = linalg.as_matrix(M)
    return scal.kron_right(M) if M.size else const(M)


def robustify(prob: LmiProblem, phi: AffExpr, G, F, H, theta1, theta2, theta3,
              tag: str = "unc", degenerate: bool = False):
    """Emit well-posedness + robust counterparts of ``phi < 0`` under the
    uncertainty G (I - Delta F)^-1 Delta H with full-block scaling data
    (theta1 > 0, theta2, theta3 <= 0); fresh positive scalars are added.

    With ``degenerate`` (theta1^-1 = 0) the theta1 rows drop out entirely.
    Returns (wellposed_expr, robust_expr).
    """
    G = G if isinstance(G, AffExpr) else const(G)
    H = linalg.as_matrix(H)
    F = linalg.as_matrix(F)
    th1 = linalg.as_matrix(theta1)
    th2 = linalg.as_matrix(theta2)
    th3 = linalg.as_matrix(theta3)
    mdim = F.shape[1]
    pdim = F.shape[0]
    alph = prob.scalar(f"alpha_{tag}", nonneg=True, floor=1e-9)
    kap = prob.scalar(f"kappa_{tag}", nonneg=True, floor=1e-9)
    Im = np.eye(mdim)
    top12 = const(-Im) + _scal_mul(alph, -(F.T @ th2))
    if degenerate:
        wellposed = bmat([[const(Im), top12],
                          [top12.T, const(Im) + _scal_mul(alph, -th3)]])
        robust = bmat([
            [phi, G + _scal_mul(kap, H.T @ th2)],
            [G.T + _scal_mul(kap, th2.T @ H),
             _scal_mul(kap, linalg.sym(F.T @ th2) + th3)],
        ])
    else:
        wellposed = bmat([
            [const(Im), top12, _scal_mul(alph, F.T)],
            [top12.T, const(Im) + _scal_mul(alph, -th3), np.zeros((mdim, pdim))],
            [_scal_mul(alph, F), np.zeros((pdim, mdim)), _scal_mul(alph, th1)],
        ])
        robust = bmat([
            [phi, G + _scal_mul(kap, H.T @ th2), _scal_mul(kap, H.T)],
            [G.T + _scal_mul(kap, th2.T @ H),
             _scal_mul(kap, linalg.sym(F.T @ th2) + th3), _scal_mul(kap, F.T)],
            [_scal_mul(kap, H), _scal_mul(kap, F), _scal_mul(kap, -th1)],
        ])
    prob.psd(wellposed, strict=True, name=f"wellposed-{tag}")
    prob.nsd(robust, strict=True, name=f"robust-{tag}")
    return wellposed, robust


def _uncertainty_h(plant: LddsPlant, blocks, K=None, X: AffExpr | None = None,
                   V: AffExpr | None = None):
    """Stacked H acting on (x, x(t-r), int F x, w) for the active channels.

    With a fixed gain the K products are folded in (analysis); with (X, V)
    the synthesis lifting replaces them by the slack variables.  Returns
    (H_expr, g_state_list, g_out_list): H rows follow slot order.
    """
    n, d, q = plant.n, plant.basis.dim, plant.q
    by_slot = {b.slot: b for b in blocks}
    roles = {"A1": "x", "B1": "xK", "A2": "xr", "B2": "xrK", "A3": "intx",
             "B3": "intxK", "D1": "w", "C1": "x", "B4": "xK", "C2": "xr",
             "B5": "xrK", "C3": "intx", "B6": "intxK", "D2": "w"}
    base_of = {"x": "x", "xK": "x", "xr": "xr", "xrK": "xr",
               "intx": "intx", "intxK": "intx", "w": "w"}
    offsets = {"x": 0, "xr": n, "intx": 2 * n, "w": 2 * n + d * n}
    widths = {"x": n, "xr": n, "intx": d * n, "w": q}
    total = 2 * n + d * n + q

    rows = []
    g_state, g_out = [], []
    for slot in UNCERTAINTY_SLOTS:
        b = by_slot.get(slot)
        if b is None:
            continue
        role = roles[slot]
        base = base_of[role]
        if role.endswith("K"):
            if X is not None:
                vv = V.kron_left(np.eye(d)) if base == "intx" else V
                piece = vv.lmul(b.H)
            else:
                KK = np.kron(np.eye(d), K) if base == "intx" else K
                piece = const(b.H @ KK)
        elif X is not None and base in ("x", "xr", "intx"):
            xx = X.kron_left(np.eye(d)) if base == "intx" else X
            piece = xx.lmul(b.H)
        else:
            piece = const(b.H)
        off, w = offsets[base], widths[base]
        row = hstack([np.zeros((piece.shape[0], off)), piece,
                      np.zeros((piece.shape[0], total - off - w))])
        rows.append(row)
        (g_state if slot in UNCERTAINTY_SLOTS[:7] else g_out).append(b.G)
    H = vstack(rows) if rows else const(np.zeros((0, total)))
    return H, g_state, g_out


def assemble_robust(plant: LddsPlant, blocks, supply: SupplyRate,
                    mode: str = "analysis", k_gain=None, alphas=None,
                    minimize_gamma: bool | None = None, per_channel: bool = False,
                    margin: float = 1e-7) -> LmiProblem:
    """Robust dissipativity conditions under slot-wise full-block uncertainty.

    Analysis mode keeps the gain fixed and scales the constant H factor by a
    fresh positive multiplier (the variables P, Q live in the G factor).
    Synthesis mode is restricted to norm-bounded channels (F = 0, Lam = 0,
    Gam = -I): there the slack variables live in the H factor, so the
    multiplier must scale the constant G side instead to stay convex.
    """
    blocks = _sorted_blocks(blocks)
    st = ldds_structure(plant)
    n, p, d, m, q = plant.n, plant.p, plant.basis.dim, plant.m, plant.q
    dn = d * n
    N = 2 * n + dn + q + m
    Fb, Xib, Lamb, Gamb = _stack_scaling(blocks)
    nu2 = Fb.shape[0]       # total Delta column dim (rows of H)
    nu1 = Fb.shape[1]       # total Delta row dim (columns of G)
    prob = LmiProblem(margin=margin)
    if minimize_gamma is None:
        minimize_gamma = supply.gamma_slot and m > 0
    j1, j2, j3, jt, gamma = _supply_exprs(prob, supply, minimize_gamma)
    j3e = j3 if isinstance(j3, AffExpr) else const(j3)
    j1e = j1 if isinstance(j1, AffExpr) else const(j1)

    # well-posedness (skipped when every F_i = 0: the inverse is trivially fine)
    if np.any(Fb):
        kap1 = prob.scalar("kappa1", nonneg=True, floor=1e-9)
        Inu1 = np.eye(nu1)
        top12 = const(-Inu1) + _scal_mul(kap1, -(Fb.T @ Lamb))
        wellposed = bmat([
            [const(Inu1), top12, _scal_mul(kap1, Fb.T)],
            [top12.T, const(Inu1) + _scal_mul(kap1, -Gamb), np.zeros((nu1, nu2))],
            [_scal_mul(kap1, Fb), np.zeros((nu2, nu1)), _scal_mul(kap1, Xib)],
        ])
        prob.psd(wellposed, strict=True, name="wellposedness")

    if per_channel:
        kap2s = [prob.scalar(f"kappa2_{i}", nonneg=True, floor=1e-9)
                 for i in range(len(blocks))]
    else:
        kap2 = prob.scalar("kappa2", nonneg=True, floor=1e-9)
        kap2s = [kap2] * len(blocks)

    def scaled_dsum(mats):
        """blockdiag of kappa_i * mats[i] as an expression."""
        return blockdiag([_scal_mul(kap2s[i], m) for i, m in enumerate(mats)])

    if mode == "analysis":
        K = np.zeros((p, n)) if k_gain is None else linalg.as_matrix(k_gain)
        P = prob.sym("P", n)
        Q = prob.rect("Q", n, dn)
        R = prob.sym("R", dn)
        S = prob.sym("S", n)
        U = prob.sym("U", n)
        lift = linalg.direct_sum([np.kron(np.eye(2 + d), K), np.zeros((q, q))])
        Acl = st.A_row + st.B1_row @ lift
        Sig = st.C_row + st.B2_row @ lift
        pq_block = bmat([[P, Q], [Q.T, R + S.kron_left(st.F)]])
        prob.psd(pq_block, strict=True, name="lkf-positivity")
        prob.psd(S, name="S>=0")
        prob.psd(U, name="U>=0")
        prob.certify_block("lkf-positivity", pq_block)
        base = _phi_ldds(prob, plant, st, Q, R, S, U, j1e, j2, j3e, jt, const(Sig)) \
            + hstack([P, np.zeros((n, n)), Q, np.zeros((n, q + m))]).T.rmul(
                np.hstack([Acl, np.zeros((n, m))])).sym()
        Hexpr, g_state, g_out = _uncertainty_h(plant, blocks, K=K)
        Hbig = np.hstack([Hexpr.const, np.zeros((nu2, m))])
        # G factor: state channels through col(P,0,Q',0,0), output channels
        # through the supply coupling col(0,...,-J2',Jt)
        lead = bmat([[P], [np.zeros((n, n))], [Q.T], [np.zeros((q + m, n))]])
        g_state_mat = np.hstack(g_state) if g_state else np.zeros((n, 0))
        g_out_mat = np.hstack(g_out) if g_out else np.zeros((m, 0))
        parts = []
        if g_state_mat.shape[1]:
            parts.append(lead.rmul(g_state_mat))
        if g_out_mat.shape[1]:
            coupl = np.vstack([np.zeros((2 * n + dn, m)), -j2.T, jt])
            parts.append(const(coupl @ g_out_mat))
        # order columns by slot: state slots precede output slots
        Gexpr = hstack(parts) if parts else const(np.zeros((N, 0)))
        # per-channel column pieces of H, applied with their own multipliers
        row0 = 0
        hT_pieces, mid_pieces, fT_pieces, corner_pieces = [], [], [], []
        for i, b in enumerate(blocks):
            nu2i = b.H.shape[0]
            Hi = np.hstack([Hexpr.const[row0:row0 + nu2i, :], np.zeros((nu2i, m))])
            row0 += nu2i
            hT_pieces.append(_scal_mul(kap2s[i], Hi.T))
            mid_pieces.append(linalg.sym(b.F.T @ b.Lam) + b.Gam)
            fT_pieces.append(b.F.T)
            corner_pieces.append(-b.Xi)
        lam_shift = hstack([_scal_mul(kap2s[i], np.hstack([Hexpr.const[sum(
            bb.H.shape[0] for bb in blocks[:i]):sum(bb.H.shape[0] for bb in blocks[:i + 1]), :],
            np.zeros((blocks[i].H.shape[0], m))]).T @ blocks[i].Lam)
            for i in range(len(blocks))]) if blocks else const(np.zeros((N, 0)))
        top_mid = Gexpr + lam_shift
        robust = bmat([
            [base, top_mid, hstack(hT_pieces) if blocks else const(np.zeros((N, 0)))],
            [top_mid.T, scaled_dsum(mid_pieces),
             scaled_dsum(fT_pieces)],
            [(hstack(hT_pieces) if blocks else const(np.zeros((N, 0)))).T,
             scaled_dsum(fT_pieces).T, scaled_dsum(corner_pieces)],
        ])
        prob.nsd(robust, strict=True, name="robust-dissipation")
        prob.meta = {"mode": "analysis", "K": K}
        return prob

    if mode != "synthesis":
        raise ValueError("mode must be 'analysis' or 'synthesis'")
    norm_bounded = (not np.any(Fb)) and (not np.any(Lamb)) and \
        np.allclose(Gamb, -np.eye(nu1))
    if not norm_bounded:
        raise NotImplementedError(
            "robust synthesis is implemented for norm-bounded channels "
            "(F = 0, Lam = 0, Gam = -I); general full-block scaling couples "
            "the multiplier to the slack variables bilinearly")
    if alphas is None:
        raise ValueError("synthesis mode needs alpha values")
    alphas = np.asarray(alphas, dtype=float)
    Pd = prob.sym("P", n)
    X = prob.rect("X", n, n)
    V = prob.rect("V", p, n)
    Qd = prob.rect("Q", n, dn)
    Rd = prob.sym("R", dn)
    Sd = prob.sym("S", n)
    Ud = prob.sym("U", n)
    prob.psd(Sd, strict=True, name="S>0")
    prob.psd(Ud, strict=True, name="U>0")
    pq_block = bmat([[Pd, Qd], [Qd.T, Rd + Sd.kron_left(st.F)]])
    prob.psd(pq_block, strict=True, name="lkf-positivity")
    prob.certify_block("lkf-positivity", pq_block)
    pi_dot = hstack([X.lmul(plant.A1) + V.lmul(plant.B1),
                     X.lmul(plant.A2) + V.lmul(plant.B2),
                     X.kron_left(np.eye(d)).lmul(plant.A3)
                     + V.kron_left(np.eye(d)).lmul(plant.B3),
                     const(plant.D1), const(np.zeros((n, m)))])
    sig_dot = hstack([X.lmul(plant.C1) + V.lmul(plant.B4),
                      X.lmul(plant.C2) + V.lmul(plant.B5),
                      X.kron_left(np.eye(d)).lmul(plant.C3)
                      + V.kron_left(np.eye(d)).lmul(plant.B6),
                      const(plant.D2)])
    phi_dot = _phi_ldds(prob, plant, st, Qd, Rd, Sd, Ud, j1e, j2, j3e, jt, sig_dot)
    p_dot = hstack([Pd, np.zeros((n, n)), Qd, np.zeros((n, q + m))])
    inner = bmat([[np.zeros((n, n)), p_dot], [p_dot.T, phi_dot]])
    col = np.vstack([np.eye(n)] + [a * np.eye(n) for a in alphas]
                    + [np.zeros((q + m, n))])
    base = hstack([-1.0 * X, pi_dot]).lmul(col).sym() + inner

    Hexpr, g_state, g_out = _uncertainty_h(plant, blocks, X=X, V=V)
    # H-dot acts on the chi columns shifted right by the slack block
    Hdot = hstack([np.zeros((nu2, n)), Hexpr, np.zeros((nu2, m))])
    g_state_mat = np.hstack(g_state) if g_state else np.zeros((n, 0))
    g_out_mat = np.hstack(g_out) if g_out else np.zeros((m, 0))
    lead = np.vstack([np.eye(n)] + [a * np.eye(n) for a in alphas]
                     + [np.zeros((q + m, n))])
    parts = []
    if g_state_mat.shape[1]:
        parts.append(lead @ g_state_mat)
    if g_out_mat.shape[1]:
        coupl = np.vstack([np.zeros((n + (2 + d) * n, m)), -j2.T, jt])
        parts.append(coupl @ g_out_mat)
    Gdot = np.hstack(parts) if parts else np.zeros((n + N, 0))
    # Petersen arrangement with the multiplier on the constant G factor:
    # [[base, t G, H'], [*, -t I, 0], [*, *, -t Xi]] < 0
    robust = bmat([
        [base, _scal_mul(kap2, Gdot), Hdot.T],
        [_scal_mul(kap2, Gdot.T), _scal_mul(kap2, -np.eye(nu1)),
         np.zeros((nu1, nu2))],
        [Hdot, np.zeros((nu2, nu1)), _scal_mul(kap2, -Xib)],
    ])
    prob.nsd(robust, strict=True, name="robust-synthesis")

    def extract_k(values):
        return values["V"] @ np.linalg.inv(values["X"])

    prob.extractors["K"] = extract_k
    prob.meta = {"mode": "synthesis", "alphas": alphas}
    return prob

# ---------------------------------------------------------------------------
# Resilient dynamic state feedback for input-delay systems
# ---------------------------------------------------------------------------


def predictor_init(A, B, K, X, basis: KernelBasis, grid: int = 400):
    """Gains of the predictor-type dynamic controller in augmented form.

    Given xdot = A x + B u(t-r) with A + B K and X Hurwitz, the controller
    udot = (K B + X) u + (K A - X K)(e^{A r} x + int e^{-A tau} B u(t+tau))
    is expressed against the normalized basis sqrt(F) f(tau) as
    (K1, K2, K3) with K2 = 0.  The input-history kernel is fitted onto the
    basis with a residual audit.
    """
    import scipy.linalg as sla
    A = linalg.as_matrix(A)
    B = linalg.as_matrix(B)
    K = linalg.as_matrix(K)
    X = linalg.as_matrix(X)
    n, p = B.shape
    nu = n + p
    r = -basis.a
    if max(np.linalg.eigvals(A + B @ K).real) >= 0:
        raise ValueError("A + B K must be Hurwitz")
    if max(np.linalg.eigvals(X).real) >= 0:
        raise ValueError("X must be Hurwitz")
    gm = gram(basis)
    sqF = linalg.sqrt_pd(gm.f_mat)            # sqrt of the inverse Gram
    sqFinv = np.linalg.inv(sqF)
    KAXK = K @ A - X @ K

    # fit [0_{p x n}, (KA - XK) e^{-A tau} B] = Chat (f(tau) kron I_nu)
    def kernel(t):
        return np.hstack([np.zeros((p, n)), KAXK @ sla.expm(-A * t) @ B])

    from .systems import fit_kernel
    Chat = fit_kernel(kernel, basis, p, nu, grid=grid)
    # K3 applies to the normalized kernel sqrt(F) f: Chat (f kron I) =
    # Chat (sqFinv kron I)(sqF f kron I)
    K3 = Chat @ np.kron(sqFinv, np.eye(nu))
    K1 = np.hstack([KAXK @ sla.expm(A * r), K @ B + X])
    K2 = np.zeros((p, nu))
    return K1, K2, K3


def assemble_resilient(A, B, D1, D3, C1, C2, C3hat, D2, basis: KernelBasis,
                       blocks, supply: SupplyRate, gains=None,
                       minimize_gamma: bool | None = None,
                       margin: float = 1e-7) -> LmiProblem:
    """Dissipativity condition for the input-delay plant under a dynamic
    state-feedback controller, with 8 uncertainty channels on the augmented
    closed loop.

    ``C3hat`` is the output's distributed coefficient against the normalized
    basis sqrt(F) f.  ``gains`` fixes (K1, K2, K3); None makes them decision
    variables (the condition is then bilinear and must go through the
    convex-step machinery instead).
    """
    import scipy.linalg as sla
    A = linalg.as_matrix(A)
    B = linalg.as_matrix(B)
    n, p = B.shape
    nu = n + p
    d = basis.dim
    D1 = linalg.as_matrix(D1)
    D3 = linalg.as_matrix(D3)
    q = D1.shape[1]
    C1 = linalg.as_matrix(C1)
    m = C1.shape[0]
    C2 = linalg.as_matrix(C2)
    C3hat = linalg.as_matrix(C3hat)
    D2 = linalg.as_matrix(D2)
    r = -basis.a
    gm = gram(basis)
    sqF = linalg.sqrt_pd(gm.f_mat)
    Mbar = sqF @ basis.companion @ np.linalg.inv(sqF)
    f0 = sqF @ basis(0.0)
    fr = sqF @ basis(-r)

    N = 2 * nu + d * nu + q + m
    prob = LmiProblem(margin=margin)
    if minimize_gamma is None:
        minimize_gamma = supply.gamma_slot and m > 0
    j1, j2, j3, jt, gamma = _supply_exprs(prob, supply, minimize_gamma)
    j1e = j1 if isinstance(j1, AffExpr) else const(j1)
    j3e = j3 if isinstance(j3, AffExpr) else const(j3)

    P = prob.sym("P", nu)
    Q = prob.rect("Q", nu, d * nu)
    R = prob.sym("R", d * nu)
    S = prob.sym("S", nu)
    U = prob.sym("U", nu)
    # normalized basis has identity Gram
    pq_block = bmat([[P, Q], [Q.T, R + S.kron_left(np.eye(d))]])
    prob.psd(pq_block, strict=True, name="lkf-positivity")
    prob.psd(S, name="S>=0")
    prob.psd(U, name="U>=0")
    prob.certify_block("lkf-positivity", pq_block)

    # A-row of the augmented system (nominal, without the controller rows)
    Arow = np.block([
        [A, np.zeros((n, p)), np.zeros((n, n)), B, np.zeros((n, d * nu)), D1,
         np.zeros((n, m))],
        [np.zeros((p, nu)), np.zeros((p, nu)), np.zeros((p, d * nu)), D3,
         np.zeros((p, m))],
    ])
    Bcol = np.vstack([np.zeros((n, p)), np.eye(p)])
    if gains is not None:
        K1, K2, K3 = (linalg.as_matrix(g) for g in gains)
        Krow = np.hstack([K1, K2, K3, np.zeros((p, q + m))])
        Acl = const(Arow + Bcol @ Krow)
    else:
        Kvar = prob.rect("Kgains", p, 2 * nu + d * nu)
        Krow = hstack([Kvar, np.zeros((p, q + m))])
        Acl = const(Arow) + Krow.lmul(Bcol)

    Fmat = np.hstack([np.kron(f0[:, None], np.eye(nu)),
                      -np.kron(fr[:, None], np.eye(nu)),
                      -np.kron(Mbar, np.eye(nu)),
                      np.zeros((d * nu, q + m))])
    colQR = bmat([[Q], [np.zeros((nu, d * nu))], [R], [np.zeros((q + m, d * nu))]])
    phi = colQR.rmul(Fmat).sym()
    phi = phi + blockdiag([S + r * U, -1.0 * S, U.kron_left(-np.eye(d)),
                           -1.0 * j3e, j1e])
    Sig = np.hstack([C1, C2, C3hat, D2])
    if m:
        colJ = const(np.vstack([np.zeros((2 * nu + d * nu, m)), -j2.T, jt]))
        phi = phi + colJ.rmul(np.hstack([Sig, np.zeros((m, m))])).sym()
    Pbig = hstack([P, np.zeros((nu, nu)), Q, np.zeros((nu, q + m))])
    if gains is None:
        raise NotImplementedError("variable gains go through the convex-step loop")
    base = phi + Pbig.T.rmul(Acl.const).sym()

    blocks = sorted(blocks, key=lambda b: b.slot)
    if blocks:
        Fb, Xib, Lamb, Gamb = _stack_scaling(blocks)
        nu2 = Fb.shape[0]
        nu1 = Fb.shape[1]
        if np.any(Fb):
            kap1 = prob.scalar("kappa1", nonneg=True, floor=1e-9)
            Inu1 = np.eye(nu1)
            top12 = const(-Inu1) + _scal_mul(kap1, -(Fb.T @ Lamb))
            prob.psd(bmat([
                [const(Inu1), top12, _scal_mul(kap1, Fb.T)],
                [top12.T, const(Inu1) + _scal_mul(kap1, -Gamb), np.zeros((nu1, nu2))],
                [_scal_mul(kap1, Fb), np.zeros((nu2, nu1)), _scal_mul(kap1, Xib)],
            ]), strict=True, name="wellposedness")
        kap2 = prob.scalar("kappa2", nonneg=True, floor=1e-9)
        # channel columns: slots 1..4 couple through col(P,0,Q',0,0), slots
        # 5..8 through the supply coupling
        lead = bmat([[P], [np.zeros((nu, nu))], [Q.T], [np.zeros((q + m, nu))]])
        coupl = np.vstack([np.zeros((2 * nu + d * nu, m)), -j2.T, jt]) if m \
            else np.zeros((N, 0))
        parts = []
        Hrows = []
        for b in blocks:
            if b.slot <= 4:
                parts.append(lead.rmul(b.G))
            else:
                parts.append(const(coupl @ b.G))
            Hrows.append(b.H)
        Gexpr = hstack(parts)
        Hbig = np.vstack(_resilient_h_rows(blocks, nu, d, q, m))
        robust = bmat([
            [base, Gexpr + _scal_mul(kap2, Hbig.T @ Lamb), _scal_mul(kap2, Hbig.T)],
            [(Gexpr + _scal_mul(kap2, Hbig.T @ Lamb)).T,
             _scal_mul(kap2, linalg.sym(Fb.T @ Lamb) + Gamb), _scal_mul(kap2, Fb.T)],
            [_scal_mul(kap2, Hbig), _scal_mul(kap2, Fb), _scal_mul(kap2, -Xib)],
        ])
        prob.nsd(robust, strict=True, name="robust-dissipation")
    else:
        prob.nsd(base, strict=True, name="dissipation")
    return prob


def _resilient_h_rows(blocks, nu, d, q, m):
    """Position each channel's H on the augmented state (8-slot layout).

    Slots 1..4 and 5..8 act on (block1, block2, integral, w) respectively.
    """
    offs = {1: 0, 2: nu, 3: 2 * nu, 4: 2 * nu + d * nu,
            5: 0, 6: nu, 7: 2 * nu, 8: 2 * nu + d * nu}
    widths = {1: nu, 2: nu, 3: d * nu, 4: q, 5: nu, 6: nu, 7: d * nu, 8: q}
    N = 2 * nu + d * nu + q + m
    out = []
    for b in blocks:
        o, w = offs[b.slot], widths[b.slot]
        if b.H.shape[1] != w:
            raise ValueError(f"slot {b.slot}: H width {b.H.shape[1]} != {w}")
        row = np.zeros((b.H.shape[0], N))
        row[:, o:o + w] = b.H
        out.append(row)
    return out

# ---------------------------------------------------------------------------
# CDDS dissipativity analysis (two-channel and single-channel variants)
# ---------------------------------------------------------------------------


def _approx_data(phi, mu, basis, rtol=1e-11):
    """(Gamma, E) least-squares data of phi against the basis (unit weight)."""
    ad = approximate(phi, mu, basis, rtol=rtol)
    return ad.gamma, ad.error_gram


def assemble_cdds_single(plant: CddsSingle, supply: SupplyRate,
                         eta: float = 1.0, minimize_gamma: bool | None = None,
                         margin: float = 1e-7) -> LmiProblem:
    """Single-delay CDDS dissipativity condition built from the reduced
    functional  eta' P eta + int y' [Q + (tau+r) R] y.

    The distributed kernel's non-basis part is carried through the scaled
    error states (congruence by eta * E^{-1/2}), keeping the error Gram off
    the LMI diagonal.
    """
    n, nu, m, q, d = plant.n, plant.nu, plant.m, plant.q, plant.basis.dim
    mu = plant.mu
    r = plant.r
    gm = gram(plant.basis)
    Fd = gm.f_mat                          # inverse Gram
    gamma_c, E = _approx_data(plant.phi, mu, plant.basis)
    A4_phi = plant.A4[:, :mu * nu]
    A4_f = plant.A4[:, mu * nu:]
    C4_phi = plant.C4[:, :mu * nu]
    C4_f = plant.C4[:, mu * nu:]
    if mu:
        Ehalf = linalg.sqrt_pd(E)
        err_A = eta * A4_phi @ np.kron(Ehalf, np.eye(nu))
        err_C = eta * C4_phi @ np.kron(Ehalf, np.eye(nu))
        err_diag = (1.0 / eta ** 2) * np.eye(mu)
    else:
        err_A = np.zeros((n, 0))
        err_C = np.zeros((m, 0))
        err_diag = np.zeros((0, 0))
    # theta coordinates: (w q, x n, y(t-r) nu, int Fd y d*nu, err mu*nu)
    Nv = q + n + nu + d * nu + mu * nu
    Arow = np.hstack([plant.D1, plant.A1, plant.A2,
                      plant.A4 @ np.kron(np.vstack([gamma_c, np.eye(d)]), np.eye(nu)),
                      err_A])
    Sig = np.hstack([plant.D2, plant.C1, plant.C2,
                     plant.C4 @ np.kron(np.vstack([gamma_c, np.eye(d)]), np.eye(nu)),
                     err_C])
    Yrow = np.hstack([np.zeros((nu, q)), plant.A6, plant.A7,
                      np.zeros((nu, d * nu + mu * nu))])
    f0 = plant.basis(0.0)
    fr = plant.basis(-r)
    # d/dt int Fd y = Fd(0) y(t) - Fd(-r) y(t-r) - (M kron I) int Fd y
    G3 = np.hstack([np.zeros((d * nu, q)),
                    np.kron(f0[:, None], np.eye(nu)) @ plant.A6,
                    np.kron(f0[:, None], np.eye(nu)) @ plant.A7
                    - np.kron(fr[:, None], np.eye(nu)),
                    -np.kron(plant.basis.companion, np.eye(nu)),
                    np.zeros((d * nu, mu * nu))])

    prob = LmiProblem(margin=margin)
    if minimize_gamma is None:
        minimize_gamma = supply.gamma_slot and m > 0
    j1, j2, j3, jt, gamma = _supply_exprs(prob, supply, minimize_gamma)
    j1e = j1 if isinstance(j1, AffExpr) else const(j1)
    j3e = j3 if isinstance(j3, AffExpr) else const(j3)
    ell = n + d * nu
    P = prob.sym("P", ell)
    Q = prob.sym("Q", nu)
    R = prob.sym("R", nu)
    prob.psd(Q, name="Q>=0")
    prob.psd(R, name="R>=0")
    ppos = P + blockdiag([np.zeros((n, n)), Q.kron_left(Fd)])
    prob.psd(ppos, strict=True, name="lkf-positivity")
    prob.certify_block("lkf-positivity", ppos)

    # Omega = Sy(Theta2' P Theta1) + y(t)'(Q + rR)y(t) - diag(...) - J couplings
    Theta2 = np.hstack([np.zeros((ell, q)),
                        np.vstack([np.hstack([np.eye(n), np.zeros((n, nu + d * nu))]),
                                   np.hstack([np.zeros((d * nu, n + nu)), np.eye(d * nu)])]),
                        np.zeros((ell, mu * nu))])
    Theta1 = np.vstack([Arow, G3])
    omega = P.rmul(Theta1).lmul(Theta2.T).sym()
    omega = omega + (Q + r * R).rmul(Yrow).lmul(Yrow.T)
    omega = omega + blockdiag([-1.0 * j3e, np.zeros((n, n)), -1.0 * Q,
                               R.kron_left(-Fd), R.kron_left(-err_diag)])
    if m:
        # -Sy(Sigma' J2 [w-selector]) and the Jt Schur column
        wsel = np.zeros((q, Nv)); wsel[:, :q] = np.eye(q)
        omega = omega - const(Sig.T @ j2).rmul(wsel).sym()
        big = bmat([[j1e, const(jt @ Sig)], [const(Sig.T @ jt.T), omega]])
        prob.nsd(big, strict=True, name="dissipation")
    else:
        prob.nsd(omega, strict=True, name="dissipation")
    prob.meta = {"coords": "(w, x, y(t-r), int, err)"}
    return prob


def assemble_cdds(plant: CddsPlant, supply: SupplyRate, etas=(1.0, 1.0),
                  aux_g: tuple | None = None, use_positivity: bool = True,
                  minimize_gamma: bool | None = None,
                  margin: float = 1e-7) -> LmiProblem:
    """Two-channel CDDS dissipativity condition with kernel approximation.

    The distributed kernels' non-basis parts enter through least-squares
    coefficients and scaled error states (congruence by eta_i E^-1/2), so the
    error Grams never sit on the LMI diagonal.  ``aux_g`` optionally supplies
    ((g1, N1), (g2, N2)) with d/dtau[(tau+r1) g1] = N1 fhat (and the r2
    analogue) to sharpen the positivity condition with weighted moments.
    """
    n, nu, m, q = plant.n, plant.nu, plant.m, plant.q
    d, dl = plant.fhat.dim, plant.fcheck.dim
    mu1, mu2 = plant.mu1, plant.mu2
    r1, r2 = plant.r1, plant.r2
    r3 = r2 - r1
    eta1, eta2 = etas
    rho = d + dl
    ell = n + 2 * nu + rho * nu
    Nv = 2 * nu + q + ell + (mu1 + mu2) * nu

    Fd = gram(plant.fhat).f_mat
    Fdl = gram(plant.fcheck).f_mat
    Phik1 = gram(plant.phihat).f_mat
    Phik2 = gram(plant.phicheck).f_mat
    g1c, E1 = _approx_data(plant.phi1, mu1, plant.fhat)
    g2c, E2 = _approx_data(plant.phi2, mu2, plant.fcheck)

    def split(Mfull, mu, dim):
        return Mfull[:, :mu * nu], Mfull[:, mu * nu:]

    A4p, A4f = split(plant.A4, mu1, d)
    A5p, A5f = split(plant.A5, mu2, dl)
    C4p, C4f = split(plant.C4, mu1, d)
    C5p, C5f = split(plant.C5, mu2, dl)

    def err_cols(Mp, E, eta, mu):
        if mu == 0:
            return np.zeros((Mp.shape[0], 0))
        return eta * Mp @ np.kron(linalg.sqrt_pd(E), np.eye(nu))

    lift1 = np.kron(np.vstack([g1c, np.eye(d)]), np.eye(nu))
    lift2 = np.kron(np.vstack([g2c, np.eye(dl)]), np.eye(nu))
    Arow = np.hstack([np.zeros((n, 2 * nu)), plant.D1, plant.A1, plant.A2,
                      plant.A3, plant.A4 @ lift1, plant.A5 @ lift2,
                      err_cols(A4p, E1, eta1, mu1), err_cols(A5p, E2, eta2, mu2)])
    Sig = np.hstack([plant.C6, plant.C7, plant.D2, plant.C1, plant.C2, plant.C3,
                     plant.C4 @ lift1, plant.C5 @ lift2,
                     err_cols(C4p, E1, eta1, mu1), err_cols(C5p, E2, eta2, mu2)])
    Yrow = np.hstack([plant.A7, plant.A8, np.zeros((nu, q + ell + (mu1 + mu2) * nu))])
    XiRow = np.hstack([np.zeros((nu, 2 * nu + q)), plant.A6, plant.A7, plant.A8,
                       np.zeros((nu, rho * nu + (mu1 + mu2) * nu))])

    # scalar-level boundary rows (coordinates: y(t), y(t-r1), y(t-r2), Fd, Fdl)
    def boundary(bas, companion, v0, v1, left: bool):
        dd = bas.dim
        z = np.zeros((dd, 1))
        if left:   # on [-r1, 0]
            return np.hstack([v0[:, None], -v1[:, None], z, -companion,
                              np.zeros((dd, dl))])
        return np.hstack([z, v0[:, None], -v1[:, None], np.zeros((dd, d)),
                          -companion])

    G3 = boundary(plant.fhat, plant.fhat.companion, plant.fhat(0.0),
                  plant.fhat(-r1), True)
    G4 = boundary(plant.fcheck, plant.fcheck.companion, plant.fcheck(-r1),
                  plant.fcheck(-r2), False)
    G1 = np.hstack([plant.phihat(0.0)[:, None], -plant.phihat(-r1)[:, None],
                    np.zeros((plant.phihat.dim, 1)), -plant.M3,
                    np.zeros((plant.phihat.dim, dl))])
    G2 = np.hstack([np.zeros((plant.phicheck.dim, 1)),
                    plant.phicheck(-r1)[:, None], -plant.phicheck(-r2)[:, None],
                    np.zeros((plant.phicheck.dim, d)), -plant.M4])
    Pi = np.vstack([np.hstack([plant.A6, plant.A7, plant.A8, np.zeros((nu, rho * nu))]),
                    np.hstack([np.zeros((2 * nu + rho * nu, n)),
                               np.eye(2 * nu + rho * nu)])])
    Theta2 = np.hstack([np.zeros((ell, 2 * nu + q)), np.eye(ell),
                        np.zeros((ell, (mu1 + mu2) * nu))])
    Theta1 = np.vstack([
        Arow,
        np.hstack([np.eye(2 * nu), np.zeros((2 * nu, q + ell + (mu1 + mu2) * nu))]),
        np.hstack([np.zeros((rho * nu, 2 * nu + q)),
                   np.kron(np.vstack([G3, G4]), np.eye(nu)) @ Pi,
                   np.zeros((rho * nu, (mu1 + mu2) * nu))]),
    ])

    prob = LmiProblem(margin=margin)
    if minimize_gamma is None:
        minimize_gamma = supply.gamma_slot and m > 0
    j1, j2, j3, jt, gamma = _supply_exprs(prob, supply, minimize_gamma)
    j1e = j1 if isinstance(j1, AffExpr) else const(j1)
    j3e = j3 if isinstance(j3, AffExpr) else const(j3)

    P = prob.sym("P", ell)
    Q1 = prob.sym("Q1", nu)
    Q2 = prob.sym("Q2", nu)
    R1 = prob.sym("R1", nu)
    R2 = prob.sym("R2", nu)
    S1 = prob.sym("S1", nu)
    S2 = prob.sym("S2", nu)
    U1 = prob.sym("U1", nu)
    U2 = prob.sym("U2", nu)
    for v, nme in ((Q1, "Q1"), (Q2, "Q2"), (R1, "R1"), (R2, "R2"),
                   (S1, "S1"), (S2, "S2"), (U1, "U1"), (U2, "U2")):
        prob.psd(v, name=f"{nme}>=0")

    if use_positivity:
        ppos = P + blockdiag([np.zeros((n + 2 * nu, n + 2 * nu)),
                              Q1.kron_left(Fd), Q2.kron_left(Fdl)]) \
            + (S1.kron_left(G1.T @ Phik1 @ G1)
               + S2.kron_left(G2.T @ Phik2 @ G2)).rmul(Pi).lmul(Pi.T)
        if aux_g is not None:
            (g1b, N1), (g2b, N2) = aux_g
            Gp1 = gram(g1b, WeightFunction.affine(r1)).f_mat
            Gp2 = gram(g2b, WeightFunction.affine(r2)).f_mat
            H1 = np.hstack([r1 * g1b(0.0)[:, None], np.zeros((g1b.dim, 2)),
                            -linalg.as_matrix(N1), np.zeros((g1b.dim, dl))])
            H2 = np.hstack([np.zeros((g2b.dim, 1)),
                            r3 * g2b(-r1)[:, None], np.zeros((g2b.dim, 1)),
                            np.zeros((g2b.dim, d)), -linalg.as_matrix(N2)])
            ppos = ppos + (U1.kron_left(H1.T @ Gp1 @ H1)
                           + U2.kron_left(H2.T @ Gp2 @ H2)).rmul(Pi).lmul(Pi.T)
        prob.psd(ppos, strict=True, name="lkf-positivity")
        prob.certify_block("lkf-positivity", ppos)

    omega = P.rmul(Theta1).lmul(Theta2.T).sym()
    if m and np.any(supply.j2):
        wsel = np.zeros((q, Nv))
        wsel[:, 2 * nu:2 * nu + q] = np.eye(q)
        omega = omega - const(Sig.T @ supply.j2).rmul(wsel).sym()
    # Bessel bounds on the ydot integrals through the auxiliary bases
    bess = (U1.kron_left(G1.T @ Phik1 @ G1) + U2.kron_left(G2.T @ Phik2 @ G2)) \
        .rmul(Pi).lmul(Pi.T)
    embed = np.zeros((ell, Nv))
    embed[:, 2 * nu + q:2 * nu + q + ell] = np.eye(ell)
    omega = omega - bess.rmul(embed).lmul(embed.T)
    omega = omega + blockdiag([
        -1.0 * (S1 - S2 - r3 * U2), -1.0 * S2, -1.0 * j3e,
        np.zeros((n, n)), -1.0 * (Q1 - Q2 - r3 * R2), -1.0 * Q2,
        R1.kron_left(-Fd), R2.kron_left(-Fdl),
        R1.kron_left(-eta1 ** 2 * np.eye(mu1)), R2.kron_left(-eta2 ** 2 * np.eye(mu2)),
    ])
    omega = omega + (Q1 + r1 * R1).rmul(XiRow).lmul(XiRow.T)

    ydotrow = plant.A6 @ Arow + Yrow
    mid = (S1 + r1 * U1).rmul(ydotrow)
    big = bmat([
        [j1e, np.zeros((m, nu)), const(jt @ Sig)],
        [np.zeros((nu, m)), -1.0 * (S1 + r1 * U1), mid],
        [const(Sig.T @ jt.T), mid.T, omega],
    ])
    prob.nsd(big, strict=True, name="dissipation")
    prob.meta = {"ell": ell, "coords": "(ydot(-r1), ydot(-r2), w, x, y(-r1), "
                                       "y(-r2), intF, intFc, err1, err2)"}
    return prob

# ---------------------------------------------------------------------------
# Time-varying distributed delay (bounded r(t) in [r1, r2])
# ---------------------------------------------------------------------------


def _tvd_structure(plant: TvdPlant):
    """Constant blocks of the bounded time-varying-delay conditions.

    chi(t) = ( [x(t-r1)], [x(t-r2)], x(t), int_[-r1,0] nrm1, int_[-r(t),-r1] nrm2,
               int_[-r2,-r(t)] nrm2, w ) with the indicated cases dropped when
    r1 = 0 or r1 = r2; nrm_i are the Gram-normalized kernel stacks.
    """
    import scipy.linalg as sla
    n, p, m, q = plant.n, plant.p, plant.m, plant.q
    d1, d2 = plant.d1, plant.d2
    k1, k2 = plant.kappa1, plant.kappa2
    r1, r2 = plant.r1, plant.r2
    has_r1 = r1 > 0          # the "1-hat" indicator (x(t-r1) block present)
    has_r2 = r2 > r1         # the "1" indicator (x(t-r2) block present)

    G1 = integrate_matrix(lambda t: np.einsum("ni,nj->nij", plant.fh1(t), plant.fh1(t)),
                          -r1, 0.0) if k1 else np.zeros((0, 0))
    G2 = integrate_matrix(lambda t: np.einsum("ni,nj->nij", plant.fh2(t), plant.fh2(t)),
                          -r2, -r1) if k2 else np.zeros((0, 0))
    F1 = integrate_matrix(lambda t: np.einsum("ni,nj->nij", plant.f1(t), plant.f1(t)),
                          -r1, 0.0) if d1 else np.zeros((0, 0))
    F2 = integrate_matrix(lambda t: np.einsum("ni,nj->nij", plant.f2(t), plant.f2(t)),
                          -r2, -r1) if d2 else np.zeros((0, 0))
    sqG1 = linalg.sqrt_pd(G1) if k1 else G1
    sqG2 = linalg.sqrt_pd(G2) if k2 else G2
    sqF1i = linalg.inv_sqrt_pd(F1) if d1 else F1
    sqF2i = linalg.inv_sqrt_pd(F2) if d2 else F2

    nxd = (int(has_r1) + int(has_r2)) * n       # discrete-state block width
    widths = [int(has_r1) * n, int(has_r2) * n, n, k1 * n, k2 * n, k2 * n, q]
    Nchi = sum(widths) + m
    off = np.cumsum([0] + widths)

    A = np.hstack([np.zeros((n, nxd)), plant.A1,
                   plant.A2 @ np.kron(sqG1, np.eye(n)),
                   plant.A3 @ np.kron(sqG2, np.eye(n)),
                   np.zeros((n, k2 * n)), plant.D1])
    B1 = np.hstack([np.zeros((n, nxd // n * p if False else (int(has_r1) + int(has_r2)) * p)),
                    plant.B1, plant.B2 @ np.kron(sqG1, np.eye(p)),
                    plant.B3 @ np.kron(sqG2, np.eye(p)), np.zeros((n, k2 * p)),
                    np.zeros((n, q))])
    C = np.hstack([np.zeros((m, nxd)), plant.C1,
                   plant.C2 @ np.kron(sqG1, np.eye(n)),
                   plant.C3 @ np.kron(sqG2, np.eye(n)),
                   np.zeros((m, k2 * n)), plant.D2])
    B2 = np.hstack([np.zeros((m, (int(has_r1) + int(has_r2)) * p)),
                    plant.B4, plant.B5 @ np.kron(sqG1, np.eye(p)),
                    plant.B6 @ np.kron(sqG2, np.eye(p)), np.zeros((m, k2 * p)),
                    np.zeros((m, q))])

    # Ihat: eta's normalized f-moments from chi's normalized fh-moments
    sel1 = np.hstack([np.zeros((d1, plant.delta1)), np.eye(d1)]) if d1 else np.zeros((0, k1))
    sel2 = np.hstack([np.zeros((d2, plant.delta2)), np.eye(d2)]) if d2 else np.zeros((0, k2))
    top = np.hstack([sqF1i @ sel1 @ sqG1 if d1 else np.zeros((0, k1)),
                     np.zeros((d1, k2)), np.zeros((d1, k2))])
    bot = np.hstack([np.zeros((d2, k1)),
                     sqF2i @ sel2 @ sqG2 if d2 else np.zeros((0, k2)),
                     sqF2i @ sel2 @ sqG2 if d2 else np.zeros((0, k2))])
    Ihat = np.kron(np.vstack([top, bot]), np.eye(n))

    # Fhat: derivative rows of the normalized eta moments over chi
    # scalar-level Fhat over the scalar chi layout
    sw = [int(has_r1), int(has_r2), 1, k1, k2, k2]
    soff = np.cumsum([0] + sw)
    Fhat_s = np.zeros((d1 + d2, sum(sw)))
    if d1:
        v0 = sqF1i @ plant.f1(0.0)
        vr = sqF1i @ plant.f1(-r1)
        Mblk = sqF1i @ plant.M1 @ sqG1
        Fhat_s[:d1, soff[2]:soff[2] + 1] = v0[:, None]
        if has_r1:
            Fhat_s[:d1, soff[0]:soff[0] + 1] = -vr[:, None]
        else:
            Fhat_s[:d1, soff[2]:soff[2] + 1] -= vr[:, None]
        Fhat_s[:d1, soff[3]:soff[3] + k1] = -Mblk
    if d2:
        v0 = sqF2i @ plant.f2(-r1)
        vr = sqF2i @ plant.f2(-r2)
        Mblk = sqF2i @ plant.M2 @ sqG2
        tgt = soff[0] if has_r1 else soff[2]
        Fhat_s[d1:, tgt:tgt + 1] = v0[:, None]
        if has_r2:
            Fhat_s[d1:, soff[1]:soff[1] + 1] = -vr[:, None]
        else:
            Fhat_s[d1:, tgt:tgt + 1] -= vr[:, None]
        Fhat_s[d1:, soff[4]:soff[4] + k2] = -Mblk
        Fhat_s[d1:, soff[5]:soff[5] + k2] = -Mblk
    Fhat = np.kron(Fhat_s, np.eye(n))

    return {"G1": G1, "G2": G2, "F1": F1, "F2": F2, "A": A, "B1": B1, "C": C,
            "B2": B2, "Ihat": Ihat, "Fhat": Fhat, "widths": widths, "off": off,
            "has_r1": has_r1, "has_r2": has_r2, "Nchi": Nchi}


def assemble_tvd(plant: TvdPlant, supply: SupplyRate, mode: str = "analysis",
                 k_gain=None, alphas=None, minimize_gamma: bool | None = None,
                 margin: float = 1e-7) -> LmiProblem:
    """Dissipativity conditions for a bounded time-varying distributed delay.

    The split-window coupling matrix Y ties the two pieces of the second
    integral; case flags (r1 = 0, r1 = r2) drop the corresponding variables
    and state blocks.
    """
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
    nblocks = int(has_r1) + int(has_r2) + 1          # discrete + current state

    prob = LmiProblem(margin=margin)
    if minimize_gamma is None:
        minimize_gamma = supply.gamma_slot and m > 0
    j1, j2, j3, jt, gamma = _supply_exprs(prob, supply, minimize_gamma)
    j1e = j1 if isinstance(j1, AffExpr) else const(j1)
    j3e = j3 if isinstance(j3, AffExpr) else const(j3)

    if mode not in ("analysis", "synthesis"):
        raise ValueError("mode must be 'analysis' or 'synthesis'")

    def commut_pair(Rexpr, Yexpr):
        """[[K,0],[0,K]] ([[R,Y],[*,R]] kron I_k2) [[K',0],[0,K']] block."""
        Kc = linalg.commutation(k2, n)
        inner = bmat([[Rexpr.kron_right(np.eye(k2)), Yexpr.kron_right(np.eye(k2))],
                      [Yexpr.T.kron_right(np.eye(k2)), Rexpr.kron_right(np.eye(k2))]])
        big = linalg.direct_sum([Kc, Kc])
        return inner.lmul(big).rmul(big.T)

    def xi_diag(Q1, Q2, R1, R2, Y):
        blocks = []
        if has_r1:
            blocks.append(Q1 - Q2 - r3 * R2 if has_r2 else Q1)
        if has_r2:
            blocks.append(Q2)
        xt = -1.0 * (Q1 + r1 * R1)
        if not has_r1:       # r1 = 0: the x(t-r1) terms merge into x(t)
            xt = xt + (Q1 - Q2 - r3 * R2) if has_r2 else xt
        blocks.append(xt)
        if k1:
            blocks.append(R1.kron_left(np.eye(k1)))
        if k2:
            blocks.append(commut_pair(R2, Y))
        blocks.append(j3e)
        return blockdiag(blocks)

    if mode == "analysis":
        K = np.zeros((p, n)) if k_gain is None else linalg.as_matrix(k_gain)
        lift = linalg.direct_sum([np.kron(np.eye(nblocks + k1 + 2 * k2), K),
                                  np.zeros((q, q))])
        Acl = st["A"] + st["B1"] @ lift
        Sig = st["C"] + st["B2"] @ lift
        P1 = prob.sym("P1", n)
        P2 = prob.rect("P2", n, rho)
        P3 = prob.sym("P3", rho)
        Q1 = prob.sym("Q1", n)
        Q2 = prob.sym("Q2", n)
        R1 = prob.sym("R1", n)
        R2 = prob.sym("R2", n)
        Y = prob.rect("Y", n, n)
        if not has_r1:
            for Vv, nme in ((Q1, "Q1"), (R1, "R1")):
                prob.eq(Vv, name=f"{nme}=0 (r1=0)")
        if not has_r2:
            for Vv, nme in ((Q2, "Q2"), (R2, "R2"), (Y, "Y")):
                prob.eq(Vv, name=f"{nme}=0 (r1=r2)")
        # (7.43)
        pos = bmat([[P1, P2], [P2.T, P3 + blockdiag(
            [Q1.kron_left(np.eye(d1)), Q2.kron_left(np.eye(d2))])]])
        prob.psd(pos, strict=True, name="lkf-positivity")
        prob.certify_block("lkf-positivity", pos)
        prob.psd(Q1, name="Q1>=0")
        prob.psd(Q2, name="Q2>=0")
        prob.psd(R1, name="R1>=0")
        if k2:
            prob.psd(bmat([[R2, Y], [Y.T, R2]]), name="split-coupling")
        else:
            prob.psd(R2, name="R2>=0")
        # Pbig and the dissipation block
        Pbig = hstack([np.zeros((n, widths[0] + widths[1])), P1,
                       P2.rmul(st["Ihat"]), np.zeros((n, q + m))])
        Pi = np.hstack([Acl, np.zeros((n, m))])
        colP2 = bmat([[np.zeros((widths[0] + widths[1], rho))], [P2],
                      [P3.rmul(st["Ihat"]).T], [np.zeros((q + m, rho))]])
        phi = colP2.rmul(np.hstack([st["Fhat"], np.zeros((rho, q + m))])).sym()
        if m:
            colJ = const(np.vstack([np.zeros((Nchi - m - q, m)), -j2.T, jt]))
            phi = phi + _expr_matmul(colJ, const(np.hstack([Sig, np.zeros((m, m))]))).sym()
        phi = phi - blockdiag([xi_diag(Q1, Q2, R1, R2, Y), -1.0 * j1e])
        lmi = phi + Pbig.T.rmul(Pi).sym()
        prob.nsd(lmi, strict=True, name="dissipation")
        prob.meta = {"mode": "analysis"}
        return prob

    # synthesis via the projected convex condition
    if alphas is None:
        raise ValueError("synthesis mode needs alphas (length nblocks + k1 + 2k2)")
    alphas = np.asarray(alphas, dtype=float)
    nlift = nblocks + k1 + 2 * k2
    if alphas.shape != (nlift,):
        raise ValueError(f"need {nlift} alpha values")
    P1 = prob.sym("P1", n)
    P2 = prob.rect("P2", n, rho)
    P3 = prob.sym("P3", rho)
    Q1 = prob.sym("Q1", n)
    Q2 = prob.sym("Q2", n)
    R1 = prob.sym("R1", n)
    R2 = prob.sym("R2", n)
    Y = prob.rect("Y", n, n)
    X = prob.rect("X", n, n)
    V = prob.rect("V", p, n)
    if not has_r1:
        prob.eq(Q1)
        prob.eq(R1)
    if not has_r2:
        prob.eq(Q2)
        prob.eq(R2)
        prob.eq(Y)
    pos = bmat([[P1, P2], [P2.T, P3 + blockdiag(
        [Q1.kron_left(np.eye(d1)), Q2.kron_left(np.eye(d2))])]])
    prob.psd(pos, strict=True, name="lkf-positivity")
    prob.certify_block("lkf-positivity", pos)
    prob.psd(Q1, name="Q1>=0")
    prob.psd(Q2, name="Q2>=0")
    prob.psd(R1, name="R1>=0")
    prob.psd(bmat([[R2, Y], [Y.T, R2]]), name="split-coupling")

    # Pi-dot: A [(I kron X) dsum I_q] + B1 [(I kron V) dsum O_q]
    IX = blockdiag([X.kron_left(np.eye(nlift)), const(np.eye(q))])
    IV = blockdiag([V.kron_left(np.eye(nlift)), const(np.zeros((q, q)))])
    pi_dot = hstack([_expr_matmul(const(st["A"]), IX)
                     + _expr_matmul(const(st["B1"]), IV), const(np.zeros((n, m)))])
    sig_dot = _expr_matmul(const(st["C"]), IX) + _expr_matmul(const(st["B2"]), IV)
    Pbig = hstack([np.zeros((n, widths[0] + widths[1])), P1,
                   P2.rmul(st["Ihat"]), np.zeros((n, q + m))])
    colP2 = bmat([[np.zeros((widths[0] + widths[1], rho))], [P2],
                  [P3.rmul(st["Ihat"]).T], [np.zeros((q + m, rho))]])
    phi = colP2.rmul(np.hstack([st["Fhat"], np.zeros((rho, q + m))])).sym()
    if m:
        colJ = const(np.vstack([np.zeros((Nchi - m - q, m)), -j2.T, jt]))
        phi = phi + _expr_matmul(colJ, hstack([sig_dot, np.zeros((m, m))])).sym()
    phi = phi - blockdiag([xi_diag(Q1, Q2, R1, R2, Y), -1.0 * j1e])
    inner = bmat([[np.zeros((n, n)), Pbig], [Pbig.T, phi]])
    col = np.vstack([np.eye(n)] + [a * np.eye(n) for a in alphas]
                    + [np.zeros((q + m, n))])
    theta = hstack([-1.0 * X, pi_dot]).lmul(col).sym() + inner
    prob.nsd(theta, strict=True, name="projected-synthesis")

    def extract_k(values):
        return values["V"] @ np.linalg.inv(values["X"])

    prob.extractors["K"] = extract_k
    prob.meta = {"mode": "synthesis", "alphas": alphas}
    return prob
