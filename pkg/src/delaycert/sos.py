"""Delay-range dissipativity via polynomial matrix variables: sum-of-squares
Gram parametrization, the range condition assembly, the affine convex-hull
shortcut, and delay-margin bisection.

Coefficient matching is exact bookkeeping over polynomial coefficients; no
sampling enters any certificate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .basis import legendre_structure
from .lmi import AffExpr, LmiProblem, bmat, blockdiag, const, hstack
from .polymat import PolyAff, poly_blockdiag, poly_bmat
from .systems import CddsRangePlant, SupplyRate


# ---------------------------------------------------------------------------
# SoS Gram machinery
# ---------------------------------------------------------------------------


def gram_poly(prob: LmiProblem, name: str, degree: int, block: int,
              strict: bool = False) -> tuple[AffExpr, PolyAff]:
    """Fresh Gram variable Q >= 0 and its polynomial (m(r) kron I)' Q (...).

    Returns (Q expression, PolyAff of degree 2*degree).
    """
    s = block
    Q = prob.sym(name, (degree + 1) * s)
    prob.psd(Q, strict=strict, name=f"{name}>=0")
    sels = [np.zeros((s, (degree + 1) * s)) for _ in range(degree + 1)]
    for i in range(degree + 1):
        sels[i][:, i * s:(i + 1) * s] = np.eye(s)
    coeffs = [AffExpr((s, s)) for _ in range(2 * degree + 1)]
    for i in range(degree + 1):
        for j in range(degree + 1):
            coeffs[i + j] = coeffs[i + j] + Q.lmul(sels[i]).rmul(sels[j].T)
    return Q, PolyAff(coeffs)


def gram_parametrize(prob: LmiProblem, target: PolyAff, degree: int,
                     name: str = "gram", strict: bool = False) -> AffExpr:
    """Constrain ``target`` (symmetric PolyAff) to be SoS of monomial degree
    ``degree`` by coefficient matching against a fresh PSD Gram variable.

    ``strict`` asks for a strictly positive Gram, giving pointwise strict
    positivity of the polynomial (the monomial vector never vanishes)."""
    s = target.shape[0]
    if target.shape[0] != target.shape[1]:
        raise ValueError("SoS target must be square")
    if target.degree > 2 * degree:
        raise ValueError(f"target degree {target.degree} exceeds 2*{degree}")
    Q, poly = gram_poly(prob, name, degree, s, strict=strict)
    n = max(len(target.coeffs), len(poly.coeffs))
    for p in range(n):
        prob.eq(target.coeff(p) - poly.coeff(p), name=f"{name}-match-r^{p}")
    return Q


def convex_hull_shortcut(target: PolyAff, r1: float, r2: float):
    """Endpoint expressions of an affine-in-r constraint (error if non-affine)."""
    if not target.is_affine_in_r():
        raise ValueError("constraint is not affine in the delay; use the SoS route")
    return target.substitute(r1), target.substitute(r2)


# ---------------------------------------------------------------------------
# range condition assembly
# ---------------------------------------------------------------------------


def _range_theta(plant: CddsRangePlant, j1, j2, j3, jt, Pvar: PolyAff,
                 Svar: PolyAff, Uvar: PolyAff):
    """Theta(r) = [[J1, Jt Sigma(r)], [*, Phi_d(r)]] as a PolyAff.

    Coordinates of the state block: (w, x, y(t-r), r^-1 * int L_d y).
    """
    n, nu, m, q, d = plant.n, plant.nu, plant.m, plant.q, plant.d
    rho = (d + 1) * nu
    L, lam, lacute = legendre_structure(d, 1.0)
    ell0 = np.ones(d + 1)
    ellr = np.array([(-1.0) ** k for k in range(d + 1)])
    Ld0 = np.kron(ell0[:, None], np.eye(nu))
    Ldr = np.kron(ellr[:, None], np.eye(nu))
    Lhat = np.kron(lacute, np.eye(nu))

    # selector polynomial (degree 1): rows (q, n, nu, rho) x cols (n + rho)
    sel0 = np.zeros((q + n + nu + rho, n + rho))
    sel0[q:q + n, :n] = np.eye(n)
    sel1 = np.zeros_like(sel0)
    sel1[q + n + nu:, n:] = np.eye(rho)
    # system rows (polynomial): [[D1, A1, A2, rA3(r)], [0, Ld0 A4, Ld0 A5 - Ldr, -Lhat]]
    degA = len(plant.rA3) - 1
    sys_coeffs = []
    for k in range(max(degA + 1, 1)):
        top = np.hstack([plant.D1 if k == 0 else np.zeros_like(plant.D1),
                         plant.A1 if k == 0 else np.zeros_like(plant.A1),
                         plant.A2 if k == 0 else np.zeros_like(plant.A2),
                         plant.rA3[k] if k <= degA else np.zeros((n, rho))])
        bot = np.hstack([np.zeros((rho, q)), Ld0 @ plant.A4,
                         Ld0 @ plant.A5 - Ldr, -Lhat]) if k == 0 else \
            np.zeros((rho, q + n + nu + rho))
        sys_coeffs.append(np.vstack([top, bot]))

    term = Pvar.lmul_poly([sel0, sel1]).rmul_poly(sys_coeffs).sym()
    Gamma = np.hstack([np.zeros((nu, q)), plant.A4, plant.A5, np.zeros((nu, rho))])
    rSU = (Svar + Uvar).shift_mul([0.0, 1.0])          # r(S(r)+U(r))
    term = term + rSU.lmul(Gamma.T).rmul(Gamma)
    Dd = np.diag([2.0 * k + 1.0 for k in range(d + 1)])
    diag = poly_blockdiag([
        PolyAff([j3]) * -1.0,
        PolyAff.constant(np.zeros((n, n))),
        Svar.shift_mul([0.0, -1.0]),                    # -rS(r)
        Uvar.shift_mul([0.0, -1.0]).kron_left(Dd),      # -(r D_d) kron U(r)
    ])
    term = term + diag
    # J2 coupling: -Sy(Sigma(r)' J2 [w-selector])
    j2m = j2 if not isinstance(j2, AffExpr) else j2.const
    sig = _sigma_poly(plant)
    if m and np.any(j2m):
        wsel = np.zeros((q, q + n + nu + rho))
        wsel[:, :q] = np.eye(q)
        term = term - sig.T.rmul(j2m).rmul(wsel).sym()
    jtsig = sig.lmul(jt)
    return poly_bmat([
        [PolyAff([j1]), jtsig],
        [jtsig.T, term],
    ])


def _sigma_poly(plant: CddsRangePlant) -> PolyAff:
    """Sigma(r) = [D2, C1, C2, rC3(r)] as a constant-coefficient PolyAff."""
    n, nu, m, q, d = plant.n, plant.nu, plant.m, plant.q, plant.d
    rho = (d + 1) * nu
    degC = len(plant.rC3) - 1
    coeffs = []
    for k in range(degC + 1):
        coeffs.append(np.hstack([plant.D2 if k == 0 else np.zeros_like(plant.D2),
                                 plant.C1 if k == 0 else np.zeros_like(plant.C1),
                                 plant.C2 if k == 0 else np.zeros_like(plant.C2),
                                 plant.rC3[k]]))
    return PolyAff.from_coeff_list(coeffs)


def _poly_var(prob: LmiProblem, name: str, n: int, degree: int) -> PolyAff:
    return PolyAff([prob.sym(f"{name}{k}", n) for k in range(degree + 1)])


def assemble_range(plant: CddsRangePlant, supply: SupplyRate, lambdas=(1, 0, 0),
                   delta7: int = 1, delta8: int = 0, rng=None,
                   minimize_gamma: bool | None = None, feas_margin_var: bool = True,
                   margin: float = 1e-7) -> LmiProblem:
    """Range dissipativity/stability over [r1, r2] (or ``rng`` when given).

    Affine positivity blocks go through the convex hull (endpoint LMIs); the
    dissipation block goes through the SoS relaxation with multiplier degree
    ``delta8`` and certificate degree ``delta7``.  In feasibility mode a
    scalar margin variable enforces strictness of the SoS certificate.
    """
    r1, r2 = rng if rng is not None else (plant.r1, plant.r2)
    lam1, lam2, lam3 = lambdas
    n, nu, m, q, d = plant.n, plant.nu, plant.m, plant.q, plant.d
    rho = (d + 1) * nu
    prob = LmiProblem(margin=margin)
    if minimize_gamma is None:
        minimize_gamma = supply.gamma_slot and m > 0
    if minimize_gamma:
        gamma = prob.scalar("gamma", nonneg=True, floor=1e-9)
        j1 = gamma.kron_right(-np.eye(m))
        j3 = gamma.kron_right(np.eye(q))
        prob.minimize(gamma)
    else:
        gamma = None
        j1 = const(supply.j1)
        j3 = const(supply.j3)

    Pv = _poly_var(prob, "P", n + rho, lam1)
    Sv = _poly_var(prob, "S", nu, lam2)
    Uv = _poly_var(prob, "U", nu, lam3)

    Dd = np.diag([2.0 * k + 1.0 for k in range(d + 1)])
    Pi_poly = Pv + poly_blockdiag([PolyAff.constant(np.zeros((n, n))),
                                   Sv.kron_left(Dd)])
    # positivity family: hull when affine, otherwise SoS with a multiplier
    gcoef = [r1 * r2, -(r1 + r2), 1.0]
    for nme, target, strict in (("Pi", Pi_poly, True), ("Spos", Sv, False),
                                ("Upos", Uv, False)):
        if target.is_affine_in_r():
            e1, e2 = convex_hull_shortcut(target, r1, r2)
            prob.psd(e1, strict=strict, name=f"{nme}@r1")
            if target.degree >= 1:
                prob.psd(e2, strict=strict, name=f"{nme}@r2")
        else:
            s = target.shape[0]
            _, mult = gram_poly(prob, f"{nme}_mult", max((target.degree - 1) // 2, 0), s)
            gram_parametrize(prob, target + mult.shift_mul(gcoef),
                             (target.degree + 2 + 1) // 2, name=f"{nme}_sos")

    theta = _range_theta(plant, j1, supply.j2, j3, supply.jt, Pv, Sv, Uv)
    s_all = theta.shape[0]
    negtheta = theta * -1.0
    strict_gram = False
    if feas_margin_var and gamma is None:
        # the scalar margin keeps the paper-count of decision variables and
        # stays homogeneous (floor 0); strictness rides on the Gram block
        eps = prob.scalar("eps", nonneg=True)
        negtheta = negtheta - PolyAff([eps.kron_right(np.eye(s_all))])
        strict_gram = True
    else:
        negtheta = negtheta - PolyAff.constant(margin * np.eye(s_all))
    _, psi = gram_poly(prob, "Psi", delta8, s_all)
    target = negtheta + psi.shift_mul(gcoef)
    gram_parametrize(prob, target, delta7, name="Theta_sos", strict=strict_gram)
    prob.meta = {"range": (r1, r2), "deltas": (delta7, delta8)}
    return prob


def point_condition(plant: CddsRangePlant, supply: SupplyRate, r0: float,
                    minimize_gamma: bool | None = None,
                    margin: float = 1e-7) -> LmiProblem:
    """Point-delay condition at r = r0 (constant matrix parameters)."""
    prob = LmiProblem(margin=margin)
    n, nu, m, q, d = plant.n, plant.nu, plant.m, plant.q, plant.d
    rho = (d + 1) * nu
    if minimize_gamma is None:
        minimize_gamma = supply.gamma_slot and m > 0
    if minimize_gamma:
        gamma = prob.scalar("gamma", nonneg=True, floor=1e-9)
        j1 = gamma.kron_right(-np.eye(m))
        j3 = gamma.kron_right(np.eye(q))
        prob.minimize(gamma)
    else:
        j1 = const(supply.j1)
        j3 = const(supply.j3)
    Pv = PolyAff([prob.sym("P", n + rho)])
    Sv = PolyAff([prob.sym("S", nu)])
    Uv = PolyAff([prob.sym("U", nu)])
    Dd = np.diag([2.0 * k + 1.0 for k in range(d + 1)])
    prob.psd((Pv + poly_blockdiag([PolyAff.constant(np.zeros((n, n))),
                                   Sv.kron_left(Dd)])).substitute(r0),
             strict=True, name="Pi>0")
    prob.psd(Sv.substitute(r0), name="S>=0")
    prob.psd(Uv.substitute(r0), name="U>=0")
    theta = _range_theta(plant, j1, supply.j2, j3, supply.jt, Pv, Sv, Uv)
    prob.nsd(theta.substitute(r0), strict=True, name="Theta<0")
    return prob


@dataclass
class MarginResult:
    rstar: float
    bracket: tuple[float, float]
    probes: list
    certificate: object


def margin_search(plant: CddsRangePlant, supply: SupplyRate, r0: float,
                  direction: str = "min", tol: float = 1e-3,
                  lambdas=(1, 0, 0), delta7: int = 2, delta8: int = 1,
                  rmin: float = 1e-3, rmax: float | None = None,
                  solver_tol: float = 1e-7) -> MarginResult:
    """Bisection for the extreme rho with the range [rho, r0] (or [r0, rho])
    certified dissipative; every accepted probe carries a full certificate."""
    pt = point_condition(plant, supply, r0, minimize_gamma=False)
    sol0 = pt.solve(tol=solver_tol)
    if not sol0.report.feasible:
        raise ValueError(f"point problem at r0 = {r0} is infeasible")

    probes = []
    best_cert = sol0

    def probe(rho):
        lo, hi = (rho, r0) if direction == "min" else (r0, rho)
        prob = assemble_range(plant, supply, lambdas=lambdas, delta7=delta7,
                              delta8=delta8, rng=(lo, hi), minimize_gamma=False,
                              feas_margin_var=True)
        sol = prob.solve(tol=solver_tol)
        probes.append((rho, sol.report.status))
        return sol

    if direction == "min":
        lo_inf, hi_feas = rmin, r0
        sol = probe(lo_inf)
        if sol.report.feasible:
            return MarginResult(lo_inf, (lo_inf, lo_inf), probes, sol)
        while hi_feas - lo_inf > tol:
            mid = 0.5 * (lo_inf + hi_feas)
            sol = probe(mid)
            if sol.report.feasible:
                hi_feas, best_cert = mid, sol
            else:
                lo_inf = mid
        return MarginResult(hi_feas, (lo_inf, hi_feas), probes, best_cert)
    # maximize
    if rmax is None:
        raise ValueError("direction='max' needs rmax")
    lo_feas, hi_inf = r0, rmax
    sol = probe(hi_inf)
    if sol.report.feasible:
        return MarginResult(hi_inf, (hi_inf, hi_inf), probes, sol)
    while hi_inf - lo_feas > tol:
        mid = 0.5 * (lo_feas + hi_inf)
        sol = probe(mid)
        if sol.report.feasible:
            lo_feas, best_cert = mid, sol
        else:
            hi_inf = mid
    return MarginResult(lo_feas, (lo_feas, hi_inf), probes, best_cert)
