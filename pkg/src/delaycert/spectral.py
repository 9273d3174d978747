"""Independent ground truth: rightmost characteristic roots by Chebyshev
collocation of the infinitesimal generator, and frequency-domain gain sweeps
with distributed terms evaluated by quadrature.

These oracles are deliberately independent of the LMI machinery; they share
only the plant data.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .basis import gauss_panels


# ---------------------------------------------------------------------------
# pseudospectral rightmost roots
# ---------------------------------------------------------------------------


def _cheb_nodes_diff(N: int, a: float, b: float):
    """Chebyshev points (descending from b to a) and differentiation matrix."""
    j = np.arange(N + 1)
    x = np.cos(np.pi * j / N)                  # 1 .. -1
    c = np.hstack([2.0, np.ones(N - 1), 2.0]) * (-1.0) ** j
    X = np.tile(x, (N + 1, 1)).T
    dX = X - X.T
    D = np.outer(c, 1.0 / c) / (dX + np.eye(N + 1))
    D = D - np.diag(D.sum(axis=1))
    # map [-1, 1] -> [a, b] with node order theta_0 = b .. theta_N = a
    theta = a + (b - a) * (x + 1.0) / 2.0
    return theta, D * 2.0 / (b - a)


def _cc_weights(N: int, a: float, b: float):
    """Clenshaw-Curtis weights via the FFT-free cosine formula."""
    if N % 2 == 1:
        raise ValueError("use an even collocation order")
    j = np.arange(N + 1)
    w = np.zeros(N + 1)
    for i in range(N + 1):
        s = 1.0
        for k in range(1, N // 2 + 1):
            bk = 1.0 if k == N // 2 else 2.0
            s -= bk * np.cos(2.0 * k * np.pi * i / N) / (4.0 * k * k - 1)
        w[i] = 2.0 * s / N
    w[0] /= 2.0
    w[-1] /= 2.0
    return w * (b - a) / 2.0


@dataclass
class SpectralResult:
    roots: np.ndarray
    abscissa: float
    nodes: int
    converged: bool
    history: list = field(default_factory=list)


def rightmost_roots(a_now, a_delay, kernel, r: float, nodes: int = 40,
                    max_nodes: int = 640, abs_tol: float = 1e-4,
                    count: int = 6) -> SpectralResult:
    """Rightmost characteristic roots of
        xdot = A x(t) + B x(t-r) + int_{-r}^0 K(tau) x(t+tau) dtau
    by collocation of the generator on Chebyshev points, with the node count
    doubled until the abscissa stabilizes.

    ``kernel`` maps tau to an (n, n) matrix (or is None).
    """
    A = linalg.as_matrix(a_now)
    B = linalg.as_matrix(a_delay)
    n = A.shape[0]
    if r <= 0:
        eigs = np.linalg.eigvals(A + B)
        order = np.argsort(-eigs.real)
        return SpectralResult(eigs[order][:count], float(eigs.real.max()), 0, True)

    history = []
    prev = None
    N = max(8, nodes - nodes % 2)
    while N <= max_nodes:
        theta, D = _cheb_nodes_diff(N, -r, 0.0)       # theta_0 = 0 .. theta_N = -r
        w = _cc_weights(N, -r, 0.0)
        M = np.kron(D, np.eye(n))
        # boundary row at theta_0 = 0: the generator action
        head = np.zeros((n, n * (N + 1)))
        head[:, :n] = A
        head[:, -n:] += B
        if kernel is not None:
            for j, (tj, wj) in enumerate(zip(theta, w)):
                head[:, j * n:(j + 1) * n] += wj * linalg.as_matrix(kernel(tj))
        M[:n, :] = head
        eigs = np.linalg.eigvals(M)
        # spurious collocation eigenvalues sit far left; track the rightmost
        order = np.argsort(-eigs.real)
        top = eigs[order][: max(count, 10)]
        absc = float(top[0].real)
        history.append((N, absc))
        if prev is not None and abs(absc - prev) <= abs_tol:
            return SpectralResult(top[:count], absc, N, True, history)
        prev = absc
        N *= 2
    return SpectralResult(top[:count], absc, N // 2, False, history)


def rightmost_roots_ldds(plant, k_gain=None, **kw) -> SpectralResult:
    """Rightmost roots of a closed-loop constant-delay plant."""
    from .systems import LddsPlant, CddsSingle
    if isinstance(plant, LddsPlant):
        K = np.zeros((plant.p, plant.n)) if k_gain is None else linalg.as_matrix(k_gain)
        A = plant.A1 + plant.B1 @ K
        B = plant.A2 + plant.B2 @ K
        d = plant.basis.dim
        KA = plant.A3 + plant.B3 @ np.kron(np.eye(d), K)

        def kernel(tau):
            return KA @ np.kron(plant.basis(tau)[:, None], np.eye(plant.n))

        return rightmost_roots(A, B, kernel, plant.r, **kw)
    if isinstance(plant, CddsSingle):
        if plant.nu and np.any(plant.A7):
            raise ValueError("spectral oracle supports difference-free coupling only "
                             "(A7 = 0); rewrite the plant first")
        # y = A6 x: substitute into the x dynamics
        A = plant.A1
        B = plant.A2 @ plant.A6
        mu, d = plant.mu, plant.basis.dim

        def kernel(tau):
            stacked = np.concatenate([np.atleast_2d(plant.phi(np.atleast_1d(tau)))[0]
                                      if mu else np.zeros(0),
                                      plant.basis(tau)])
            return plant.A4 @ np.kron(stacked[:, None], np.eye(plant.nu)) @ plant.A6

        return rightmost_roots(A, B, kernel, plant.r, **kw)
    raise TypeError(f"unsupported plant type {type(plant).__name__}")


# ---------------------------------------------------------------------------
# frequency-domain gain sweep
# ---------------------------------------------------------------------------


@dataclass
class SweepResult:
    peak: float
    omega_peak: float
    omegas: np.ndarray
    gains: np.ndarray


def _default_grid(omega_max: float, count: int):
    return np.concatenate([np.linspace(1e-4, min(5.0, omega_max / 4), count // 2),
                           np.linspace(min(5.0, omega_max / 4), omega_max, count // 2)])


def l2_gain_sweep_ldds(plant, k_gain=None, omegas=None, omega_max: float = 80.0,
                       count: int = 4000, refine: int = 2,
                       check_stability: bool = True) -> SweepResult:
    """Peak singular value of the closed-loop transfer function of a
    constant-delay plant, distributed terms by quadrature."""
    from .systems import LddsPlant
    assert isinstance(plant, LddsPlant)
    K = np.zeros((plant.p, plant.n)) if k_gain is None else linalg.as_matrix(k_gain)
    n, d = plant.n, plant.basis.dim
    A = plant.A1 + plant.B1 @ K
    B = plant.A2 + plant.B2 @ K
    KA = plant.A3 + plant.B3 @ np.kron(np.eye(d), K)
    C = plant.C1 + plant.B4 @ K
    Cb = plant.C2 + plant.B5 @ K
    KC = plant.C3 + plant.B6 @ np.kron(np.eye(d), K)
    if check_stability:
        res = rightmost_roots_ldds(plant, k_gain=k_gain)
        if res.abscissa >= 0:
            raise ValueError(f"system is not stable (abscissa {res.abscissa:.4g})")
    t, w = gauss_panels(-plant.r, 0.0, 32, 32)
    fv = plant.basis(t)

    def gain(om):
        e = np.exp(1j * om * t)
        L = (w[:, None] * (fv * e[:, None])).sum(axis=0)
        IA = KA @ np.kron(L[:, None], np.eye(n))
        IC = KC @ np.kron(L[:, None], np.eye(n))
        X = np.linalg.solve(1j * om * np.eye(n) - A - B * np.exp(-1j * om * plant.r)
                            - IA, plant.D1)
        G = (C + Cb * np.exp(-1j * om * plant.r) + IC) @ X + plant.D2
        return float(np.linalg.svd(G, compute_uv=False)[0]) if G.size else 0.0

    omegas = _default_grid(omega_max, count) if omegas is None else np.asarray(omegas)
    gains = np.array([gain(om) for om in omegas])
    i = int(np.argmax(gains))
    peak, ompk = gains[i], omegas[i]
    for _ in range(refine):
        lo = omegas[max(i - 1, 0)]
        hi = omegas[min(i + 1, len(omegas) - 1)]
        loc = np.linspace(lo, hi, 200)
        lg = np.array([gain(om) for om in loc])
        j = int(np.argmax(lg))
        if lg[j] > peak:
            peak, ompk = lg[j], loc[j]
        omegas_loc, i, omegas, gains = loc, j, loc, lg
    return SweepResult(float(peak), float(ompk), omegas, gains)


def l2_gain_sweep_cdds_range(plant, r: float, omegas=None, omega_max: float = 120.0,
                             count: int = 6000, refine: int = 2) -> SweepResult:
    """Gain sweep for the delay-range plant at a fixed delay r.

    Handles the difference channel y = A4 x + A5 y(t-r) exactly through
    (I - A5 e^{-rs})^{-1}.
    """
    from .basis import legendre_basis
    from .systems import CddsRangePlant
    assert isinstance(plant, CddsRangePlant)
    n, nu, d = plant.n, plant.nu, plant.d
    rho = (d + 1) * nu
    lb = legendre_basis(d, -r, 0.0)
    t, w = gauss_panels(-r, 0.0, 32, 32)
    lv = lb(t)
    A3r = sum(plant.rA3[k] * r ** k for k in range(len(plant.rA3))) / r
    C3r = sum(plant.rC3[k] * r ** k for k in range(len(plant.rC3))) / r

    def gain(om):
        e = np.exp(1j * om * t)
        L = (w[:, None] * (lv * e[:, None])).sum(axis=0)
        Ye = np.linalg.solve(np.eye(nu) - plant.A5 * np.exp(-1j * om * r), plant.A4)
        IA = A3r @ np.kron(L[:, None], np.eye(nu))
        IC = C3r @ np.kron(L[:, None], np.eye(nu))
        M = 1j * om * np.eye(n) - plant.A1 \
            - (plant.A2 * np.exp(-1j * om * r) + IA) @ Ye
        X = np.linalg.solve(M, plant.D1)
        G = (plant.C1 + (plant.C2 * np.exp(-1j * om * r) + IC) @ Ye) @ X + plant.D2
        return float(np.linalg.svd(G, compute_uv=False)[0]) if G.size else 0.0

    omegas = _default_grid(omega_max, count) if omegas is None else np.asarray(omegas)
    gains = np.array([gain(om) for om in omegas])
    i = int(np.argmax(gains))
    peak, ompk = gains[i], omegas[i]
    for _ in range(refine):
        lo = omegas[max(i - 1, 0)]
        hi = omegas[min(i + 1, len(omegas) - 1)]
        loc = np.linspace(lo, hi, 200)
        lg = np.array([gain(om) for om in loc])
        j = int(np.argmax(lg))
        if lg[j] > peak:
            peak, ompk = lg[j], loc[j]
        i, omegas, gains = j, loc, lg
    return SweepResult(float(peak), float(ompk), omegas, gains)
