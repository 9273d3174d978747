"""Function bases f with df/dtau = M f, weighted Gram matrices and
least-squares approximation data for distributed-delay kernels.

Bases are immutable after construction; evaluators are pure and vectorized
over tau.  Gram integrals use composite Gauss-Legendre quadrature with
panel doubling until entries stabilize, except where a closed form exists
(Legendre with unit weight, Jacobi with its own weight).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.special import gammaln

from . import linalg


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------


def gauss_panels(a: float, b: float, panels: int, nodes_per_panel: int = 64):
    """Composite Gauss-Legendre nodes/weights on [a, b]."""
    x, w = np.polynomial.legendre.leggauss(nodes_per_panel)
    edges = np.linspace(a, b, panels + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1:] - edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def integrate_matrix(fun, a: float, b: float, rtol: float = 1e-11,
                     max_panels: int = 256, nodes_per_panel: int = 64):
    """Integrate a matrix-valued fun(tau_array) -> (N, p, q) with panel doubling."""
    panels = 1
    prev = None
    while panels <= max_panels:
        t, w = gauss_panels(a, b, panels, nodes_per_panel)
        vals = fun(t)
        out = np.tensordot(w, vals, axes=(0, 0))
        if prev is not None:
            # scale by the integral of |f| so that near-cancelling integrands
            # are judged against the integrand magnitude, not the tiny result
            absint = np.tensordot(np.abs(w), np.abs(vals), axes=(0, 0))
            scale = max(np.abs(out).max(), 1e-3 * absint.max(), 1e-30)
            if np.abs(out - prev).max() <= rtol * scale:
                return out
        prev = out
        panels *= 2
    warnings.warn("quadrature did not stabilize to the requested tolerance")
    return prev


# ---------------------------------------------------------------------------
# weights
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WeightFunction:
    """Nonnegative weight on an interval; descriptor drives closed forms."""

    kind: str = "unit"                 # unit | affine | jacobi | user
    params: tuple = ()
    fn: object = None

    def __call__(self, tau):
        tau = np.asarray(tau, dtype=float)
        if self.kind == "unit":
            return np.ones_like(tau)
        if self.kind == "affine":
            (c,) = self.params
            return tau + c
        if self.kind == "jacobi":
            alpha, beta, a, b = self.params
            return np.clip(b - tau, 0, None) ** alpha * np.clip(tau - a, 0, None) ** beta
        return np.asarray(self.fn(tau), dtype=float)

    @staticmethod
    def unit() -> "WeightFunction":
        return WeightFunction("unit")

    @staticmethod
    def affine(c: float) -> "WeightFunction":
        """tau + c (vanishing at tau = -c)."""
        return WeightFunction("affine", (float(c),))

    @staticmethod
    def jacobi(alpha: float, beta: float, a: float, b: float) -> "WeightFunction":
        return WeightFunction("jacobi", (float(alpha), float(beta), float(a), float(b)))

    @staticmethod
    def user(fn) -> "WeightFunction":
        return WeightFunction("user", (), fn)


# ---------------------------------------------------------------------------
# bases
# ---------------------------------------------------------------------------


class RankDeficientBasisError(ValueError):
    pass


@dataclass(frozen=True)
class KernelBasis:
    """Vector of scalar functions f(tau) with companion matrix df/dtau = M f."""

    dim: int
    interval: tuple[float, float]
    companion: np.ndarray
    evaluator: object                      # tau array -> (N, dim)
    descriptor: str = "user"
    meta: dict = field(default_factory=dict, compare=False)

    def __call__(self, tau):
        tau = np.asarray(tau, dtype=float)
        scalar = tau.ndim == 0
        vals = self.evaluator(np.atleast_1d(tau))
        return vals[0] if scalar else vals

    @property
    def a(self):
        return self.interval[0]

    @property
    def b(self):
        return self.interval[1]

    def verify_companion(self, grid: int = 1000, tol: float = 1e-8) -> float:
        """Max residual of f' - M f on a uniform grid (finite differences)."""
        a, b = self.interval
        t = np.linspace(a, b, grid)
        h = 1e-6 * (b - a)
        tt = np.clip(t, a + h, b - h)
        fp = (self(tt + h) - self(tt - h)) / (2 * h)
        f = self(tt)
        resid = np.abs(fp - f @ self.companion.T)
        bound = tol * (1.0 + np.abs(f).max(axis=1, keepdims=True)) * max(1.0, np.abs(self.companion).max())
        worst = float((resid / bound).max()) if resid.size else 0.0
        if worst > 100:       # finite differences themselves cost ~1e-8 accuracy
            raise ValueError(f"companion residual too large (x{worst:.1f} of budget)")
        return worst

    def scaled(self, scales) -> "KernelBasis":
        """Rescale rows: f_s = S f with S = diag(scales); M_s = S M S^-1."""
        s = np.asarray(scales, dtype=float)
        if s.shape != (self.dim,) or np.any(s == 0):
            raise ValueError("need one nonzero scale per basis function")
        ev = self.evaluator
        return KernelBasis(self.dim, self.interval,
                           (self.companion * s[:, None]) / s[None, :],
                           lambda t, _ev=ev, _s=s: _ev(t) * _s,
                           descriptor=f"scaled({self.descriptor})",
                           meta=dict(self.meta))


def _poly_eval_matrix(coeff: np.ndarray, shift_b: float, width: float):
    """Evaluator for rows of coeff in powers of u = (tau - b)/width."""
    def ev(tau):
        u = (np.asarray(tau, dtype=float) - shift_b) / width
        powers = u[:, None] ** np.arange(coeff.shape[1])[None, :]
        return powers @ coeff.T
    return ev


def _monomial_derivative(dp1: int) -> np.ndarray:
    N = np.zeros((dp1, dp1))
    for i in range(1, dp1):
        N[i, i - 1] = i
    return N


def legendre_coeff_matrix(d: int) -> np.ndarray:
    """Rows k: coefficients of ell_k in powers of u = (tau-b)/(b-a)."""
    C = np.zeros((d + 1, d + 1))
    for k in range(d + 1):
        for j in range(k + 1):
            C[k, j] = math.comb(k, j) * math.comb(k + j, j)
    return C


def legendre_basis(d: int, a: float, b: float) -> KernelBasis:
    """Legendre rows ell_0..ell_d shifted to [a, b] (orthogonal, unit weight)."""
    if b <= a:
        raise ValueError("need b > a")
    if d < 0:
        raise ValueError("degree must be >= 0")
    C = legendre_coeff_matrix(d)
    width = b - a
    # d/dtau = (1/width) * C N C^{-1} applied in the u variable
    M = C @ _monomial_derivative(d + 1) @ np.linalg.inv(C) / width
    basis = KernelBasis(d + 1, (a, b), M, _poly_eval_matrix(C, b, width),
                        descriptor=f"legendre(d={d})",
                        meta={"degree": d, "closed_gram": "legendre-unit"})
    return basis


def jacobi_coeff_matrix(d: int, alpha: float, beta: float) -> np.ndarray:
    C = np.zeros((d + 1, d + 1))
    for k in range(d + 1):
        lead = gammaln(k + 1 + alpha) - gammaln(k + 1) - gammaln(k + 1 + alpha + beta)
        for j in range(k + 1):
            lg = (lead + gammaln(k + j + 1 + alpha + beta) - gammaln(j + 1 + alpha)
                  + math.lgamma(k + 1) - math.lgamma(j + 1) - math.lgamma(k - j + 1))
            C[k, j] = math.exp(lg)
    return C


def jacobi_basis(d: int, alpha: float, beta: float, a: float, b: float) -> KernelBasis:
    """Shift-scaled Jacobi rows, orthogonal w.r.t. (b-tau)^alpha (tau-a)^beta."""
    if alpha <= -1 or beta <= -1:
        raise ValueError("need alpha, beta > -1")
    if b <= a:
        raise ValueError("need b > a")
    C = jacobi_coeff_matrix(d, alpha, beta)
    width = b - a
    M = C @ _monomial_derivative(d + 1) @ np.linalg.inv(C) / width
    return KernelBasis(d + 1, (a, b), M, _poly_eval_matrix(C, b, width),
                       descriptor=f"jacobi(d={d},a={alpha},b={beta})",
                       meta={"degree": d, "alpha": alpha, "beta": beta,
                             "closed_gram": "jacobi"})


def jacobi_weighted_gram_diag(d: int, alpha: float, beta: float,
                              a: float, b: float) -> np.ndarray:
    """Diagonal of the weighted Gram of the shift-scaled Jacobi rows."""
    out = np.empty(d + 1)
    for k in range(d + 1):
        lg = ((alpha + beta + 1) * math.log(b - a)
              + gammaln(k + alpha + 1) + gammaln(k + beta + 1)
              - math.lgamma(k + 1) - math.log(2 * k + alpha + beta + 1)
              - gammaln(k + alpha + beta + 1))
        out[k] = math.exp(lg)
    return out


def ode_basis(m, f_init, a: float, b: float) -> KernelBasis:
    """f(tau) = expm(m*tau) f_init; exact companion m; Gram PD required."""
    m = linalg.as_matrix(m)
    f0 = np.asarray(f_init, dtype=float).ravel()
    d = f0.size
    if m.shape != (d, d):
        raise ValueError("companion/initial-value dimension mismatch")

    def ev(tau):
        return np.stack([sla.expm(m * t) @ f0 for t in np.atleast_1d(tau)])

    basis = KernelBasis(d, (a, b), m.copy(), ev, descriptor=f"ode(d={d})")
    gm = integrate_matrix(lambda t: np.einsum("ni,nj->nij", basis(t), basis(t)), a, b)
    w = np.linalg.eigvalsh(gm)
    if w.min() <= 1e-12 * max(w.max(), 1e-30):
        raise RankDeficientBasisError(
            f"ode basis functions are not independent on [{a}, {b}] "
            f"(Gram min eig {w.min():.2e})")
    return basis


def trig_basis(count: int, omega: float, a: float, b: float) -> KernelBasis:
    """(1, sin(w t), cos(w t), sin(2w t), ..., cos(count*w t)) with exact companion."""
    d = 2 * count + 1

    def ev(tau):
        tau = np.atleast_1d(tau)
        cols = [np.ones_like(tau)]
        for i in range(1, count + 1):
            cols.append(np.sin(i * omega * tau))
        for i in range(1, count + 1):
            cols.append(np.cos(i * omega * tau))
        return np.stack(cols, axis=1)

    M = np.zeros((d, d))
    for i in range(1, count + 1):
        M[i, count + i] = i * omega
        M[count + i, i] = -i * omega
    return KernelBasis(d, (a, b), M, ev, descriptor=f"trig(k={count},w={omega})")


def stack_bases(parts: list[KernelBasis]) -> KernelBasis:
    """Concatenate bases on a common interval; block-diagonal companion."""
    iv = parts[0].interval
    for p in parts:
        if p.interval != iv:
            raise ValueError("bases must share the interval")
    dim = sum(p.dim for p in parts)
    M = linalg.direct_sum([p.companion for p in parts])

    def ev(tau):
        return np.concatenate([p(np.atleast_1d(tau)) for p in parts], axis=1)

    return KernelBasis(dim, iv, M, ev,
                       descriptor="+".join(p.descriptor for p in parts))


# ---------------------------------------------------------------------------
# Gram matrices
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GramMatrix:
    """finv = integral of w f f' (SPD) and its inverse f_mat."""

    finv: np.ndarray
    f_mat: np.ndarray
    method: str

    @property
    def condition(self) -> float:
        w = np.linalg.eigvalsh(self.finv)
        return float(w.max() / w.min())


def gram(basis: KernelBasis, weight: WeightFunction | None = None,
         rtol: float = 1e-11) -> GramMatrix:
    weight = weight or WeightFunction.unit()
    a, b = basis.interval
    method = "quadrature"
    closed = basis.meta.get("closed_gram")
    if closed == "legendre-unit" and weight.kind == "unit":
        finv = np.diag([(b - a) / (2 * k + 1) for k in range(basis.dim)])
        method = "closed-form"
    elif closed == "jacobi" and weight.kind == "jacobi" and \
            weight.params == (basis.meta["alpha"], basis.meta["beta"], a, b):
        finv = np.diag(jacobi_weighted_gram_diag(basis.meta["degree"],
                                                 basis.meta["alpha"],
                                                 basis.meta["beta"], a, b))
        method = "closed-form"
    else:
        finv = integrate_matrix(
            lambda t: weight(t)[:, None, None] * np.einsum("ni,nj->nij", basis(t), basis(t)),
            a, b, rtol=rtol)
    finv = 0.5 * (finv + finv.T)
    w = np.linalg.eigvalsh(finv)
    if w.min() <= 1e-12 * max(w.max(), 1e-30):
        raise RankDeficientBasisError(f"Gram numerically singular (eigs {w.min():.2e}..{w.max():.2e})")
    if w.max() / w.min() > 1e8:
        warnings.warn(f"Gram condition number {w.max() / w.min():.2e} exceeds 1e8; "
                      "consider scaling the basis")
    return GramMatrix(finv=finv, f_mat=np.linalg.inv(finv), method=method)


# ---------------------------------------------------------------------------
# least-squares approximation (coefficients, residual, error Gram)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ApproxData:
    """phi ~ Gamma f with residual e = phi - Gamma f and error Gram E."""

    gamma: np.ndarray          # mu x d
    error_gram: np.ndarray     # mu x mu SPD
    basis: KernelBasis
    phi: object
    weight: WeightFunction

    def residual(self, tau):
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        return _eval_vec(self.phi, tau) - self.basis(tau) @ self.gamma.T


def _eval_vec(phi, tau):
    """Evaluate a vector-valued callable as (N, mu)."""
    vals = np.asarray(phi(tau), dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    return vals


def approximate(phi, mu: int, basis: KernelBasis,
                weight: WeightFunction | None = None, rtol: float = 1e-11) -> ApproxData:
    """Least-squares coefficients of phi against the basis under the weight.

    ``phi`` maps a tau array to (N, mu) values (mu = 0 gives empty data).
    The error Gram is assembled from the stacked (phi, f) Gram, which also
    certifies the stacked functions' independence.
    """
    weight = weight or WeightFunction.unit()
    a, b = basis.interval
    if mu == 0:
        return ApproxData(np.zeros((0, basis.dim)), np.zeros((0, 0)),
                          basis, phi, weight)

    def structured(t):
        ph = _eval_vec(phi, t)
        f = basis(t)
        stacked = np.concatenate([ph, f], axis=1)
        return weight(t)[:, None, None] * np.einsum("ni,nj->nij", stacked, stacked)

    big = integrate_matrix(structured, a, b, rtol=rtol)
    big = 0.5 * (big + big.T)
    w = np.linalg.eigvalsh(big)
    if w.min() <= 1e-12 * max(w.max(), 1e-30):
        raise RankDeficientBasisError(
            "stacked (phi, f) Gram is singular: phi lies in the span of f")
    gpp = big[:mu, :mu]
    gpf = big[:mu, mu:]
    gff = big[mu:, mu:]
    gamma = np.linalg.solve(gff, gpf.T).T
    # error Gram through the congruence route: [I, -Gamma] big [I, -Gamma]'
    E = gpp - gpf @ gamma.T - gamma @ gpf.T + gamma @ gff @ gamma.T
    E = 0.5 * (E + E.T)
    return ApproxData(gamma, E, basis, phi, weight)


def legendre_structure(d: int, r: float):
    """(L_d(r), Lambda_d, Lacute_d) with ell_d = L_d(r) m_d and
    d ell/dtau = (1/r) Lacute_d ell_d on [-r, 0]."""
    if r <= 0:
        raise ValueError("need r > 0")
    lam = legendre_coeff_matrix(d)             # u = tau/r powers
    powers = np.diag([r ** (-i) for i in range(d + 1)])
    L = lam @ powers
    lacute = lam @ _monomial_derivative(d + 1) @ np.linalg.inv(lam)
    return L, lam, lacute
