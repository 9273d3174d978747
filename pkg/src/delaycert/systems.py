"""Plant data model: distributed-delay systems, supply rates, kernel
decomposition onto declared bases, and closed-loop assembly.

Plants are immutable value objects; dimension audits run at construction.
Empty channels (zero input/output/disturbance dimensions) are represented by
zero-width matrices and collapse out of every block assembly downstream.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .basis import KernelBasis, WeightFunction, gram, integrate_matrix


def _mat(a, rows, cols, name) -> np.ndarray:
    if a is None:
        return np.zeros((rows, cols))
    m = linalg.as_matrix(a)
    if m.shape != (rows, cols):
        raise ValueError(f"{name}: expected shape {(rows, cols)}, got {m.shape}")
    return m


# ---------------------------------------------------------------------------
# supply rates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SupplyRate:
    """Quadratic supply rate s(z, w) parameterized by (J1, Jtilde, J2, J3).

    s = z' Jt' J1^-1 Jt z + 2 z' J2 w + w' J3 w with J1 negative definite.
    ``gamma_slot`` marks an L2-gain rate whose J1 = -gamma I, J3 = gamma I
    should be rebuilt from a decision scalar during assembly.
    """

    j1: np.ndarray
    jt: np.ndarray
    j2: np.ndarray
    j3: np.ndarray
    m: int
    q: int
    gamma_slot: bool = False

    def __post_init__(self):
        object.__setattr__(self, "j1", _mat(self.j1, self.m, self.m, "J1"))
        object.__setattr__(self, "jt", _mat(self.jt, self.m, self.m, "Jtilde"))
        object.__setattr__(self, "j2", _mat(self.j2, self.m, self.q, "J2"))
        object.__setattr__(self, "j3", _mat(self.j3, self.q, self.q, "J3"))
        if self.m:
            w = np.linalg.eigvalsh(0.5 * (self.j1 + self.j1.T))
            if w.max() >= 0:
                raise ValueError("J1 must be negative definite")
            sandwich = self.jt.T @ np.linalg.solve(self.j1, self.jt)
            if np.linalg.eigvalsh(0.5 * (sandwich + sandwich.T)).max() > 1e-10:
                raise ValueError("Jt' J1^-1 Jt must be negative semidefinite")

    def evaluate(self, z, w):
        z = np.asarray(z, dtype=float).reshape(self.m)
        w = np.asarray(w, dtype=float).reshape(self.q)
        mid = self.jt.T @ np.linalg.solve(self.j1, self.jt)
        return float(z @ mid @ z + 2 * z @ self.j2 @ w + w @ self.j3 @ w)


def supply_rate_preset(kind: str, m: int, q: int, gamma: float = 1.0,
                       alpha: float = 0.0, beta: float = 1.0) -> SupplyRate:
    """Presets: l2gain(gamma), passivity, sector(alpha, beta)."""
    if kind == "l2gain":
        if gamma <= 0:
            raise ValueError("need gamma > 0")
        return SupplyRate(j1=-gamma * np.eye(m), jt=np.eye(m),
                          j2=np.zeros((m, q)), j3=gamma * np.eye(q),
                          m=m, q=q, gamma_slot=True)
    if kind == "passivity":
        if m != q:
            raise ValueError("passivity needs m == q")
        return SupplyRate(j1=-np.eye(m), jt=np.zeros((m, m)),
                          j2=np.eye(m), j3=np.zeros((m, m)), m=m, q=q)
    if kind == "sector":
        if m != q:
            raise ValueError("sector constraint needs m == q")
        return SupplyRate(j1=-np.eye(m), jt=-np.eye(m),
                          j2=-0.5 * (alpha + beta) * np.eye(m),
                          j3=alpha * beta * np.eye(m), m=m, q=q)
    raise ValueError(f"unknown supply-rate preset {kind!r}")


def stability_supply(n_ignored: int = 0) -> SupplyRate:
    """Empty supply rate (m = q = 0) for pure stability analysis."""
    return SupplyRate(j1=np.zeros((0, 0)), jt=np.zeros((0, 0)),
                      j2=np.zeros((0, 0)), j3=np.zeros((0, 0)), m=0, q=0)


# ---------------------------------------------------------------------------
# kernel decomposition
# ---------------------------------------------------------------------------


def decompose_kernel(terms, basis: KernelBasis, out_dim: int, col_dim: int,
                     grid: int = 500, tol: float = 1e-9) -> np.ndarray:
    """Assemble the coefficient matrix of ``sum_k coeff_k * f_tag(tau)``.

    ``terms`` is a list of (tag, coefficient-matrix) pairs where each tag is
    a basis-row index (0-based) optionally written as ("row", scale).  The
    result A satisfies  kernel(tau) == A (f(tau) kron I_col)  on a grid.
    """
    d = basis.dim
    A = np.zeros((out_dim, d * col_dim))
    recon_terms = []
    for tag, coeff in terms:
        scale = 1.0
        if isinstance(tag, tuple):
            tag, scale = tag
        if not (0 <= tag < d):
            raise ValueError(f"kernel tag {tag} does not map to a basis row (dim {d})")
        C = _mat(coeff, out_dim, col_dim, f"kernel coeff for tag {tag}")
        A[:, tag * col_dim:(tag + 1) * col_dim] += C / scale
        recon_terms.append((tag, scale, C))
    # verification grid: reconstruct via the basis and compare
    a, b = basis.interval
    taus = np.linspace(a, b, grid)
    fvals = basis(taus)
    worst = 0.0
    for k, t in enumerate(taus):
        direct = sum(C * fvals[k, tag] / scale for tag, scale, C in recon_terms)
        direct = direct if recon_terms else np.zeros((out_dim, col_dim))
        via = A @ np.kron(fvals[k][:, None], np.eye(col_dim))
        worst = max(worst, float(np.abs(direct - via).max()))
    if worst > tol:
        raise ValueError(f"kernel reconstruction residual {worst:.2e} exceeds {tol:.0e}")
    return A


def fit_kernel(kernel_fn, basis: KernelBasis, out_dim: int, col_dim: int,
               grid: int = 500, tol: float = 1e-9) -> np.ndarray:
    """Least-squares fit of a matrix kernel onto the basis with residual audit.

    kernel_fn(tau) -> (out_dim, col_dim); returns A with
    kernel(tau) = A (f(tau) kron I_col) to within ``tol`` on the grid.
    """
    a, b = basis.interval
    taus = np.linspace(a, b, grid)
    fvals = basis(taus)                          # (N, d)
    kvals = np.stack([np.asarray(kernel_fn(t), dtype=float).reshape(out_dim, col_dim)
                      for t in taus])            # (N, out, col)
    # entrywise: k_ij(tau) = sum_r A[i, r*col + j] f_r(tau)
    coef, *_ = np.linalg.lstsq(fvals, kvals.reshape(len(taus), -1), rcond=None)
    resid = np.abs(fvals @ coef - kvals.reshape(len(taus), -1)).max()
    if resid > tol:
        raise ValueError(f"kernel does not lie in the basis span (residual {resid:.2e})")
    A = np.zeros((out_dim, basis.dim * col_dim))
    for r in range(basis.dim):
        A[:, r * col_dim:(r + 1) * col_dim] = coef[r].reshape(out_dim, col_dim)
    return A


# ---------------------------------------------------------------------------
# plants
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LddsPlant:
    """Linear distributed-delay system with one constant delay r.

    xdot = A1 x + A2 x(t-r) + A3 F(tau)-integral + B1 u + B2 u(t-r)
           + B3 (f kron Ip)-integral + D1 w
    z    = C1 x + C2 x(t-r) + C3 ... + B4 u + B5 u(t-r) + B6 ... + D2 w
    """

    n: int
    p: int
    m: int
    q: int
    r: float
    basis: KernelBasis
    A1: np.ndarray = None
    A2: np.ndarray = None
    A3: np.ndarray = None
    B1: np.ndarray = None
    B2: np.ndarray = None
    B3: np.ndarray = None
    D1: np.ndarray = None
    C1: np.ndarray = None
    C2: np.ndarray = None
    C3: np.ndarray = None
    B4: np.ndarray = None
    B5: np.ndarray = None
    B6: np.ndarray = None
    D2: np.ndarray = None

    def __post_init__(self):
        n, p, m, q, d = self.n, self.p, self.m, self.q, self.basis.dim
        if self.r <= 0:
            raise ValueError("need delay r > 0")
        names = {"A1": (n, n), "A2": (n, n), "A3": (n, d * n),
                 "B1": (n, p), "B2": (n, p), "B3": (n, d * p), "D1": (n, q),
                 "C1": (m, n), "C2": (m, n), "C3": (m, d * n),
                 "B4": (m, p), "B5": (m, p), "B6": (m, d * p), "D2": (m, q)}
        for nme, (rr, cc) in names.items():
            object.__setattr__(self, nme, _mat(getattr(self, nme), rr, cc, nme))
        if abs(self.basis.a - (-self.r)) > 1e-12 or abs(self.basis.b) > 1e-12:
            raise ValueError("basis interval must be [-r, 0]")


@dataclass(frozen=True)
class ClosedLoop:
    """Stacked closed-loop blocks with a state-vector layout descriptor."""

    A: np.ndarray
    B1: np.ndarray
    C: np.ndarray
    B2: np.ndarray
    K: np.ndarray
    layout: tuple            # (name, width) pairs describing chi(t)
    lifted: np.ndarray       # (I_{..} kron K) + O_q lifting actually applied

    @property
    def a_closed(self) -> np.ndarray:
        return self.A + self.B1 @ self.lifted

    @property
    def c_closed(self) -> np.ndarray:
        return self.C + self.B2 @ self.lifted


def close_loop(plant: LddsPlant, k_gain=None) -> ClosedLoop:
    """LDDS closed loop per the (A + B1 [(I kron K) dsum O_q]) stacking."""
    n, p, q, d = plant.n, plant.p, plant.m and plant.m or plant.m, plant.basis.dim
    p = plant.p
    q = plant.q
    K = _mat(k_gain, p, n, "K") if k_gain is not None else np.zeros((p, n))
    A = np.hstack([plant.A1, plant.A2, plant.A3, plant.D1])
    B1 = np.hstack([plant.B1, plant.B2, plant.B3, np.zeros((n, q))])
    C = np.hstack([plant.C1, plant.C2, plant.C3, plant.D2])
    B2 = np.hstack([plant.B4, plant.B5, plant.B6, np.zeros((plant.m, q))])
    lift = linalg.direct_sum([np.kron(np.eye(2 + d), K), np.zeros((q, q))])
    layout = (("x", n), ("x(t-r)", n), ("int F x", d * n), ("w", q))
    return ClosedLoop(A=A, B1=B1, C=C, B2=B2, K=K, layout=layout, lifted=lift)


# ---------------------------------------------------------------------------
# uncertain blocks (Ch.3 style linear-fractional uncertainty slots)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UncertainBlock:
    """One linear-fractional uncertainty channel G (I - Delta F)^-1 Delta H.

    Scaling data (Xi > 0, Lambda, Gamma <= 0) bounds Delta through the full
    block constraint [I; Delta]' [[Xi^-1, Lambda], [*, Gamma]] [I; Delta] >= 0.
    """

    slot: int
    G: np.ndarray
    H: np.ndarray
    F: np.ndarray
    Xi: np.ndarray
    Lam: np.ndarray
    Gam: np.ndarray

    def __post_init__(self):
        for nme in ("G", "H", "F", "Xi", "Lam", "Gam"):
            object.__setattr__(self, nme, linalg.as_matrix(getattr(self, nme)))
        nu1 = self.G.shape[1]       # columns of G = rows of Delta
        nu2 = self.H.shape[0]       # rows of H = cols of Delta
        if self.F.shape != (nu2, nu1):
            raise ValueError(f"slot {self.slot}: F must be {nu2}x{nu1}")
        if self.Xi.shape != (nu2, nu2) or self.Lam.shape != (nu2, nu1) \
                or self.Gam.shape != (nu1, nu1):
            raise ValueError(f"slot {self.slot}: scaling data dimensions inconsistent")
        if linalg.min_eig(self.Xi) <= 0:
            raise ValueError(f"slot {self.slot}: Xi must be positive definite")
        if self.Gam.size and linalg.min_eig(-self.Gam) < -1e-12:
            raise ValueError(f"slot {self.slot}: Gamma must be negative semidefinite")

    def sample_delta(self, rng: np.random.Generator, margin: float = 0.95) -> np.ndarray:
        """A random Delta inside the scaling set (uses Gamma < 0 strictly)."""
        nu1, nu2 = self.G.shape[1], self.H.shape[0]
        D = rng.standard_normal((nu1, nu2))
        # shrink until [I; D]'[[Xi^-1, Lam],[*, Gam]][I; D] >= 0
        XiInv = np.linalg.inv(self.Xi)
        for _ in range(60):
            Q = XiInv + self.Lam @ D + D.T @ self.Lam.T + D.T @ self.Gam @ D
            if linalg.min_eig(Q) >= 0:
                return D * margin
            D *= 0.7
        return np.zeros((nu1, nu2))


# ---------------------------------------------------------------------------
# CDDS plants (Ch.5 two-channel and single-channel variants)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CddsPlant:
    """Coupled differential-difference system with two delay channels.

    xdot = A1 x + A2 y(t-r1) + A3 y(t-r2) + int_[-r1,0] A4([phi1; fhat] kron I) y
           + int_[-r2,-r1] A5([phi2; fcheck] kron I) y + D1 w
    y    = A6 x + A7 y(t-r1) + A8 y(t-r2)
    z    = C1 x + C2 y(t-r1) + C3 y(t-r2) + (C4, C5 distributed)
           + C6 ydot(t-r1) + C7 ydot(t-r2) + D2 w
    """

    n: int
    nu: int
    m: int
    q: int
    r1: float
    r2: float
    fhat: KernelBasis               # on [-r1, 0], companion M1
    fcheck: KernelBasis             # on [-r2, -r1], companion M2
    mu1: int
    mu2: int
    phi1: object                    # tau array -> (N, mu1)
    phi2: object
    A1: np.ndarray = None
    A2: np.ndarray = None
    A3: np.ndarray = None
    A4: np.ndarray = None           # n x (mu1 + d) nu, phi-part first
    A5: np.ndarray = None           # n x (mu2 + delta) nu
    A6: np.ndarray = None
    A7: np.ndarray = None
    A8: np.ndarray = None
    D1: np.ndarray = None
    C1: np.ndarray = None
    C2: np.ndarray = None
    C3: np.ndarray = None
    C4: np.ndarray = None
    C5: np.ndarray = None
    C6: np.ndarray = None
    C7: np.ndarray = None
    D2: np.ndarray = None
    phihat: KernelBasis | None = None     # auxiliary basis, dfhat-compatible
    phicheck: KernelBasis | None = None
    M3: np.ndarray = None                 # d phihat/dtau = M3 fhat
    M4: np.ndarray = None

    def __post_init__(self):
        n, nu, m, q = self.n, self.nu, self.m, self.q
        d, dl = self.fhat.dim, self.fcheck.dim
        if not (self.r2 > self.r1 > 0):
            raise ValueError("need r2 > r1 > 0")
        names = {"A1": (n, n), "A2": (n, nu), "A3": (n, nu),
                 "A4": (n, (self.mu1 + d) * nu), "A5": (n, (self.mu2 + dl) * nu),
                 "A6": (nu, n), "A7": (nu, nu), "A8": (nu, nu), "D1": (n, q),
                 "C1": (m, n), "C2": (m, nu), "C3": (m, nu),
                 "C4": (m, (self.mu1 + d) * nu), "C5": (m, (self.mu2 + dl) * nu),
                 "C6": (m, nu), "C7": (m, nu), "D2": (m, q)}
        for nme, (rr, cc) in names.items():
            object.__setattr__(self, nme, _mat(getattr(self, nme), rr, cc, nme))
        ph = self.phihat or self.fhat
        pc = self.phicheck or self.fcheck
        object.__setattr__(self, "phihat", ph)
        object.__setattr__(self, "phicheck", pc)
        M3 = self.M3 if self.M3 is not None else ph.companion
        M4 = self.M4 if self.M4 is not None else pc.companion
        object.__setattr__(self, "M3", _mat(M3, ph.dim, d, "M3"))
        object.__setattr__(self, "M4", _mat(M4, pc.dim, dl, "M4"))


@dataclass(frozen=True)
class CddsSingle:
    """Single-delay CDDS used by the simplified (one-channel) analysis."""

    n: int
    nu: int
    m: int
    q: int
    r: float
    basis: KernelBasis              # on [-r, 0]
    mu: int
    phi: object
    A1: np.ndarray = None
    A2: np.ndarray = None           # x(t) coupling to y(t-r)
    A4: np.ndarray = None           # n x (mu + d) nu distributed, phi-part first
    A6: np.ndarray = None
    A7: np.ndarray = None
    D1: np.ndarray = None
    C1: np.ndarray = None
    C2: np.ndarray = None
    C4: np.ndarray = None
    D2: np.ndarray = None

    def __post_init__(self):
        n, nu, m, q, d = self.n, self.nu, self.m, self.q, self.basis.dim
        if self.r <= 0:
            raise ValueError("need r > 0")
        names = {"A1": (n, n), "A2": (n, nu), "A4": (n, (self.mu + d) * nu),
                 "A6": (nu, n), "A7": (nu, nu), "D1": (n, q),
                 "C1": (m, n), "C2": (m, nu), "C4": (m, (self.mu + d) * nu),
                 "D2": (m, q)}
        for nme, (rr, cc) in names.items():
            object.__setattr__(self, nme, _mat(getattr(self, nme), rr, cc, nme))


# ---------------------------------------------------------------------------
# Ch.6 range plants and Ch.7 time-varying-delay plants
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CddsRangePlant:
    """CDDS with Legendre-kernel distributed delay, delay in [r1, r2].

    rA3(r) and rC3(r) are polynomial matrices in r supplied by their
    coefficient lists (constant term first).
    """

    n: int
    nu: int
    m: int
    q: int
    d: int
    r1: float
    r2: float
    A1: np.ndarray = None
    A2: np.ndarray = None
    A4: np.ndarray = None
    A5: np.ndarray = None
    D1: np.ndarray = None
    C1: np.ndarray = None
    C2: np.ndarray = None
    D2: np.ndarray = None
    rA3: tuple = ()                 # coefficients of r*A3(r), each n x (d+1)nu
    rC3: tuple = ()                 # coefficients of r*C3(r), each m x (d+1)nu

    def __post_init__(self):
        n, nu, m, q = self.n, self.nu, self.m, self.q
        rho = (self.d + 1) * nu
        if not (self.r2 > self.r1 > 0):
            raise ValueError("need r2 > r1 > 0")
        names = {"A1": (n, n), "A2": (n, nu), "A4": (nu, n), "A5": (nu, nu),
                 "D1": (n, q), "C1": (m, n), "C2": (m, nu), "D2": (m, q)}
        for nme, (rr, cc) in names.items():
            object.__setattr__(self, nme, _mat(getattr(self, nme), rr, cc, nme))
        ra3 = tuple(_mat(c, n, rho, "rA3 coeff") for c in self.rA3) or (np.zeros((n, rho)),)
        rc3 = tuple(_mat(c, m, rho, "rC3 coeff") for c in self.rC3) or (np.zeros((m, rho)),)
        object.__setattr__(self, "rA3", ra3)
        object.__setattr__(self, "rC3", rc3)
        if max(abs(np.linalg.eigvals(self.A5))) >= 1.0:
            raise ValueError("difference channel requires spectral radius(A5) < 1")


@dataclass(frozen=True)
class TvdPlant:
    """LDDS with a bounded time-varying distributed delay r(t) in [r1, r2].

    Kernels are decomposed per Proposition-1 style data: on [-r1, 0] against
    fh1 = [phi1; f1] and on [-r2, -r1] against fh2 = [phi2; f2], where only
    the f-parts enter the Krasovskii functional.
    """

    n: int
    p: int
    m: int
    q: int
    r1: float
    r2: float
    f1: KernelBasis | None          # on [-r1, 0] (d1 may be 0 -> None)
    f2: KernelBasis | None          # on [-r2, -r1]
    phi1: object                    # tau -> (N, delta1)
    phi2: object
    delta1: int
    delta2: int
    M1: np.ndarray = None           # d f1/dtau = M1 [phi1; f1]
    M2: np.ndarray = None
    A1: np.ndarray = None
    A2: np.ndarray = None           # n x kappa1 n   (kernel on [-r1, 0])
    A3: np.ndarray = None           # n x kappa2 n   (kernel on [-r2, -r1])
    B1: np.ndarray = None
    B2: np.ndarray = None           # n x kappa1 p
    B3: np.ndarray = None           # n x kappa2 p
    D1: np.ndarray = None
    C1: np.ndarray = None
    C2: np.ndarray = None           # m x kappa1 n
    C3: np.ndarray = None           # m x kappa2 n
    B4: np.ndarray = None
    B5: np.ndarray = None           # m x kappa1 p
    B6: np.ndarray = None           # m x kappa2 p
    D2: np.ndarray = None

    @property
    def d1(self) -> int:
        return self.f1.dim if self.f1 is not None else 0

    @property
    def d2(self) -> int:
        return self.f2.dim if self.f2 is not None else 0

    @property
    def kappa1(self) -> int:
        return self.d1 + self.delta1

    @property
    def kappa2(self) -> int:
        return self.d2 + self.delta2

    def __post_init__(self):
        n, p, m, q = self.n, self.p, self.m, self.q
        if self.r2 <= 0 or self.r1 < 0 or self.r1 > self.r2:
            raise ValueError("need 0 <= r1 <= r2, r2 > 0")
        if self.r1 == 0 and self.kappa1:
            raise ValueError("r1 = 0 requires the first channel to be empty")
        if self.r1 == self.r2 and self.kappa2:
            raise ValueError("r1 = r2 requires the second channel to be empty")
        k1, k2 = self.kappa1, self.kappa2
        names = {"A1": (n, n), "A2": (n, k1 * n), "A3": (n, k2 * n),
                 "B1": (n, p), "B2": (n, k1 * p), "B3": (n, k2 * p), "D1": (n, q),
                 "C1": (m, n), "C2": (m, k1 * n), "C3": (m, k2 * n),
                 "B4": (m, p), "B5": (m, k1 * p), "B6": (m, k2 * p), "D2": (m, q)}
        for nme, (rr, cc) in names.items():
            object.__setattr__(self, nme, _mat(getattr(self, nme), rr, cc, nme))
        M1 = self.M1 if self.M1 is not None else np.zeros((self.d1, k1))
        M2 = self.M2 if self.M2 is not None else np.zeros((self.d2, k2))
        object.__setattr__(self, "M1", _mat(M1, self.d1, k1, "M1"))
        object.__setattr__(self, "M2", _mat(M2, self.d2, k2, "M2"))

    def fh1(self, tau):
        """[phi1; f1] values as (N, kappa1)."""
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        parts = []
        if self.delta1:
            parts.append(np.asarray(self.phi1(tau), dtype=float).reshape(len(tau), self.delta1))
        if self.d1:
            parts.append(self.f1(tau))
        return np.concatenate(parts, axis=1) if parts else np.zeros((len(tau), 0))

    def fh2(self, tau):
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        parts = []
        if self.delta2:
            parts.append(np.asarray(self.phi2(tau), dtype=float).reshape(len(tau), self.delta2))
        if self.d2:
            parts.append(self.f2(tau))
        return np.concatenate(parts, axis=1) if parts else np.zeros((len(tau), 0))


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


@dataclass
class ValidationResult:
    ok: bool
    checks: dict
    warnings: list


def validate_plant(plant) -> ValidationResult:
    """Dimension audits plus difference-equation ISS certificates.

    Single-delay coupling uses the exact spectral-radius test; two-delay
    coupling uses the sufficient norm condition |A7| + |A8| < 1 and only
    warns when it fails without a violated necessary condition.
    """
    checks, warns = {}, []
    ok = True
    if isinstance(plant, CddsPlant):
        n1 = np.linalg.norm(plant.A7, 2)
        n2 = np.linalg.norm(plant.A8, 2)
        checks["difference_norm_sum"] = n1 + n2
        if n1 + n2 >= 1.0:
            rho = max(abs(np.linalg.eigvals(plant.A7 + plant.A8)))
            checks["rho(A7+A8)"] = rho
            if rho >= 1.0:
                ok = False
            else:
                warns.append("two-delay ISS: sufficient condition |A7|+|A8| < 1 "
                             "fails; result not certified")
        gfh = gram(plant.fhat)
        gfc = gram(plant.fcheck)
        checks["gram_cond_fhat"] = gfh.condition
        checks["gram_cond_fcheck"] = gfc.condition
    elif isinstance(plant, (CddsSingle,)):
        rho = max(abs(np.linalg.eigvals(plant.A7))) if plant.nu else 0.0
        checks["rho(A7)"] = rho
        if rho >= 1.0:
            ok = False
    elif isinstance(plant, CddsRangePlant):
        rho = max(abs(np.linalg.eigvals(plant.A5))) if plant.nu else 0.0
        checks["rho(A5)"] = rho
        if rho >= 1.0:
            ok = False
    elif isinstance(plant, TvdPlant):
        for nme, bas, dim in (("G1", plant.fh1, plant.kappa1), ("G2", plant.fh2, plant.kappa2)):
            if dim == 0:
                checks[f"{nme}_empty"] = True
                continue
            a, b = ((-plant.r1, 0.0) if nme == "G1" else (-plant.r2, -plant.r1))
            gm = integrate_matrix(lambda t: np.einsum("ni,nj->nij", bas(t), bas(t)), a, b)
            wmin = float(np.linalg.eigvalsh(gm).min())
            checks[f"{nme}_min_eig"] = wmin
            if wmin <= 1e-12:
                ok = False
    elif isinstance(plant, LddsPlant):
        gm = gram(plant.basis)
        checks["gram_cond"] = gm.condition
    return ValidationResult(ok=ok, checks=checks, warnings=warns)
