"""Lower-bound forms used by the functional derivatives, certified on
sampled functions by a quadrature oracle.

Every bound takes a sampled vector function x(tau), a PSD/PD weight matrix U,
a basis and a scalar weight; the oracle integrates the left-hand side and the
moment vectors with composite Gauss-Legendre quadrature.  The bound-gap
relations (slack and free-matrix forms reaching the projection bound at their
optimal auxiliary matrices) are exposed for direct testing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .basis import KernelBasis, WeightFunction, gauss_panels


# ---------------------------------------------------------------------------
# sampled functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SampledFunction:
    """Vector-valued function with a descriptor for reproducible suites."""

    fn: object
    dim: int
    descriptor: str = "user"

    def __call__(self, tau):
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        vals = np.asarray(self.fn(tau), dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        return vals


def random_sample_function(rng: np.random.Generator, dim: int, a: float,
                           b: float, kind: str | None = None) -> SampledFunction:
    """Polynomials up to degree 6, trig mixtures with frequencies <= 30, or
    piecewise-linear bumps; chosen to stress in-span and out-of-span cases."""
    kind = kind or rng.choice(["poly", "trig", "pwl"])
    if kind == "poly":
        deg = int(rng.integers(0, 7))
        C = rng.standard_normal((dim, deg + 1))

        def fn(t, C=C, deg=deg):
            u = (2 * t - a - b) / (b - a)
            P = u[:, None] ** np.arange(deg + 1)[None, :]
            return P @ C.T
        return SampledFunction(fn, dim, f"poly(deg={deg})")
    if kind == "trig":
        k = int(rng.integers(1, 4))
        freqs = rng.uniform(0.5, 30.0, size=k)
        amps = rng.standard_normal((dim, k))
        phases = rng.uniform(0, 2 * np.pi, size=k)

        def fn(t, freqs=freqs, amps=amps, phases=phases):
            waves = np.sin(np.outer(t, freqs) + phases)
            return waves @ amps.T
        return SampledFunction(fn, dim, f"trig(k={k})")
    knots = np.sort(rng.uniform(a, b, size=3))
    vals = rng.standard_normal((5, dim))
    xs = np.concatenate([[a], knots, [b]])

    def fn(t, xs=xs, vals=vals):
        out = np.empty((len(t), dim))
        for j in range(dim):
            out[:, j] = np.interp(t, xs, vals[:, j])
        return out
    return SampledFunction(fn, dim, "piecewise-linear")


# ---------------------------------------------------------------------------
# quadrature oracle
# ---------------------------------------------------------------------------


class Quadrature:
    """Fixed node set on [a, b] reused across one suite."""

    def __init__(self, a: float, b: float, panels: int = 24, nodes: int = 32):
        self.a, self.b = a, b
        self.t, self.w = gauss_panels(a, b, panels, nodes)

    def lhs(self, x: SampledFunction, U, weight: WeightFunction):
        xv = x(self.t)
        wv = weight(self.t)
        return float(np.einsum("k,ki,ij,kj->", self.w * wv, xv,
                               linalg.as_matrix(U), xv))

    def moments(self, x: SampledFunction, basis_vals, weight: WeightFunction):
        """int w(tau) (f(tau) kron I_n) x(tau) dtau as a (d*n,) vector."""
        xv = x(self.t)
        wv = weight(self.t)
        return np.einsum("k,kd,kn->dn", self.w * wv, basis_vals, xv).reshape(-1)

    def gram(self, basis_vals, weight: WeightFunction):
        wv = weight(self.t)
        return np.einsum("k,kd,ke->de", self.w * wv, basis_vals, basis_vals)


# ---------------------------------------------------------------------------
# bounds
# ---------------------------------------------------------------------------


def bessel_bound(x: SampledFunction, U, basis: KernelBasis,
                 weight: WeightFunction | None = None,
                 quad: Quadrature | None = None):
    """Projection bound: lhs >= m' (F kron U) m with m the weighted moments.

    Returns (lhs, rhs, gap)."""
    weight = weight or WeightFunction.unit()
    quad = quad or Quadrature(basis.a, basis.b)
    U = linalg.as_matrix(U)
    fv = basis(quad.t)
    lhs = quad.lhs(x, U, weight)
    m = quad.moments(x, fv, weight)
    Finv = quad.gram(fv, weight)
    F = np.linalg.inv(Finv)
    rhs = float(m @ np.kron(F, U) @ m)
    return lhs, rhs, lhs - rhs


def slack_bound(x: SampledFunction, U, basis: KernelBasis, omega, h,
                weight: WeightFunction | None = None,
                quad: Quadrature | None = None):
    """Slack-variable form: zeta' [Sy(H' Omega) - H'(F^-1 kron U^-1) H] zeta.

    ``omega`` factors the moments (Omega zeta = m); equality with the
    projection bound at H = (F kron U) Omega."""
    weight = weight or WeightFunction.unit()
    quad = quad or Quadrature(basis.a, basis.b)
    U = linalg.as_matrix(U)
    Om = linalg.as_matrix(omega)
    H = linalg.as_matrix(h)
    fv = basis(quad.t)
    m = quad.moments(x, fv, weight)
    zeta, *_ = np.linalg.lstsq(Om, m, rcond=None)
    if np.linalg.norm(Om @ zeta - m) > 1e-8 * max(1.0, np.linalg.norm(m)):
        raise ValueError("Omega does not factor the moment vector")
    Finv = quad.gram(fv, weight)
    mid = linalg.sym(H.T @ Om) - H.T @ np.kron(Finv, np.linalg.inv(U)) @ H
    return float(zeta @ mid @ zeta)


def optimal_slack(basis: KernelBasis, U, omega, weight: WeightFunction | None = None,
                  quad: Quadrature | None = None):
    """H = (F kron U) Omega, the equality-achieving slack matrix."""
    weight = weight or WeightFunction.unit()
    quad = quad or Quadrature(basis.a, basis.b)
    fv = basis(quad.t)
    F = np.linalg.inv(quad.gram(fv, weight))
    return np.kron(F, linalg.as_matrix(U)) @ linalg.as_matrix(omega)


def free_matrix_bound(x: SampledFunction, U, basis: KernelBasis, upsilon,
                      xmat, ymat, weight: WeightFunction | None = None,
                      quad: Quadrature | None = None, check: bool = True):
    """Free-matrix form: z' [Sy(Upsilon' Xhat) - W] z with the PSD coupling
    [[U, -X], [*, Y]] >= 0 and W the Y-weighted Gram average."""
    weight = weight or WeightFunction.unit()
    quad = quad or Quadrature(basis.a, basis.b)
    U = linalg.as_matrix(U)
    n = U.shape[0]
    d = basis.dim
    X = linalg.as_matrix(xmat)
    Y = linalg.as_matrix(ymat)
    Up = linalg.as_matrix(upsilon)
    rho_n = Up.shape[1]
    if check and linalg.min_eig(np.block([[U, -X], [-X.T, Y]])) < -1e-10:
        raise ValueError("coupling condition [[U, -X], [*, Y]] >= 0 fails")
    fv = basis(quad.t)
    m = quad.moments(x, fv, weight)
    z, *_ = np.linalg.lstsq(Up, m, rcond=None)
    if np.linalg.norm(Up @ z - m) > 1e-8 * max(1.0, np.linalg.norm(m)):
        raise ValueError("Upsilon does not factor the moment vector")
    Xhat = np.vstack([X[:, i * rho_n:(i + 1) * rho_n] for i in range(d)])
    Finv = quad.gram(fv, weight)
    W = sum(Finv[i, j] * Y[i * rho_n:(i + 1) * rho_n, j * rho_n:(j + 1) * rho_n]
            for i in range(d) for j in range(d))
    mid = linalg.sym(Up.T @ Xhat) - W
    return float(z @ mid @ z)


def optimal_free_matrix(basis: KernelBasis, U, upsilon,
                        weight: WeightFunction | None = None,
                        quad: Quadrature | None = None):
    """(X, Y) rendering the free-matrix bound equal to the projection bound."""
    weight = weight or WeightFunction.unit()
    quad = quad or Quadrature(basis.a, basis.b)
    U = linalg.as_matrix(U)
    n = U.shape[0]
    d = basis.dim
    Up = linalg.as_matrix(upsilon)
    rho_n = Up.shape[1]
    fv = basis(quad.t)
    F = np.linalg.inv(quad.gram(fv, weight))
    Xhat = np.kron(F, U) @ Up
    X = np.hstack([Xhat[i * n:(i + 1) * n, :] for i in range(d)])
    Y = X.T @ np.linalg.solve(U, X)
    return X, Y


def error_augmented_bound(x: SampledFunction, U, basis: KernelBasis, extra,
                          weight: WeightFunction | None = None,
                          quad: Quadrature | None = None):
    """Projection bound plus the residual term (E^-1 kron U) for an extra
    function family g; reduces to the plain bound when g is empty.

    Returns (lhs, rhs_augmented, rhs_plain)."""
    weight = weight or WeightFunction.unit()
    quad = quad or Quadrature(basis.a, basis.b)
    U = linalg.as_matrix(U)
    fv = basis(quad.t)
    lhs = quad.lhs(x, U, weight)
    m = quad.moments(x, fv, weight)
    Finv = quad.gram(fv, weight)
    F = np.linalg.inv(Finv)
    rhs_plain = float(m @ np.kron(F, U) @ m)
    if extra is None:
        return lhs, rhs_plain, rhs_plain
    gv = np.asarray(extra(quad.t), dtype=float)
    if gv.ndim == 1:
        gv = gv[:, None]
    wv = weight(quad.t)
    Ggf = np.einsum("k,kd,ke->de", quad.w * wv, gv, fv)
    Ggg = np.einsum("k,kd,ke->de", quad.w * wv, gv, gv)
    Acoef = Ggf @ F
    ev = gv - fv @ Acoef.T
    E = Ggg - Acoef @ Ggf.T
    me = np.einsum("k,kd,kn->dn", quad.w * wv, ev, x(quad.t)).reshape(-1)
    rhs_aug = rhs_plain + float(me @ np.kron(np.linalg.inv(E), U) @ me)
    return lhs, rhs_aug, rhs_plain


def split_interval_bound(x: SampledFunction, U, ymat, basis: KernelBasis,
                         rho_split: float, weight: WeightFunction | None = None,
                         panels: int = 24, check: bool = True):
    """Two-piece bound over [a, b] split at -rho: the full-interval Gram
    weights both pieces and Y couples them, subject to [[U, Y], [*, U]] >= 0.

    Returns (lhs, rhs)."""
    weight = weight or WeightFunction.unit()
    a, b = basis.interval
    if not (a <= -rho_split <= b):
        raise ValueError("split point must lie inside the interval")
    U = linalg.as_matrix(U)
    Y = linalg.as_matrix(ymat)
    if check and linalg.min_eig(np.block([[U, Y], [Y.T, U]])) < -1e-10:
        raise ValueError("coupling condition [[U, Y], [*, U]] >= 0 fails")
    full = Quadrature(a, b, panels=panels)
    lhs = full.lhs(x, U, weight)
    Finv = full.gram(basis(full.t), weight)
    n = U.shape[0]
    parts = []
    for lo, hi in ((-rho_split, b), (a, -rho_split)):
        if hi - lo < 1e-14:
            parts.append(np.zeros(basis.dim * n))
            continue
        qd = Quadrature(lo, hi, panels=max(4, panels // 2))
        xv = x(qd.t)
        wv = weight(qd.t)
        fv = basis(qd.t)
        parts.append(np.einsum("k,kn,kd->nd", qd.w * wv, xv, fv).reshape(-1))
    mvec = np.concatenate(parts)       # (I_n kron f) moments, both pieces
    big = np.kron(np.block([[U, Y], [Y.T, U]]), np.linalg.inv(Finv))
    rhs = float(mvec @ big @ mvec)
    return lhs, rhs


def completion_of_squares(b, c, m_free):
    """(lhs, rhs) with lhs = B'C^-1B and rhs = M'B + B'M - M'CM."""
    B = linalg.as_matrix(b)
    C = linalg.as_matrix(c)
    M = linalg.as_matrix(m_free)
    if linalg.min_eig(C) <= 0:
        raise linalg.NotPositiveDefiniteError(linalg.min_eig(C))
    lhs = B.T @ np.linalg.solve(C, B)
    rhs = M.T @ B + B.T @ M - M.T @ C @ M
    return lhs, rhs


def gap_invariance_check(basis: KernelBasis, g_transform, U, samples,
                         weight: WeightFunction | None = None,
                         quad: Quadrature | None = None, rtol: float = 1e-9):
    """Projection bounds computed with f and with G f agree per sample."""
    weight = weight or WeightFunction.unit()
    quad = quad or Quadrature(basis.a, basis.b)
    G = linalg.as_matrix(g_transform)
    if abs(np.linalg.det(G)) < 1e-12:
        raise ValueError("transform must be invertible")
    U = linalg.as_matrix(U)
    fv = basis(quad.t)
    gv = fv @ G.T
    Ff = np.linalg.inv(quad.gram(fv, weight))
    Fg = np.linalg.inv(quad.gram(gv, weight))
    report = []
    ok = True
    for x in samples:
        mf = quad.moments(x, fv, weight)
        mg = quad.moments(x, gv, weight)
        rf = float(mf @ np.kron(Ff, U) @ mf)
        rg = float(mg @ np.kron(Fg, U) @ mg)
        rel = abs(rf - rg) / max(1.0, abs(rf))
        report.append((rf, rg, rel))
        ok &= rel <= rtol
    return ok, report
