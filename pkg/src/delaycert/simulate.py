"""Fixed-step time-domain simulation of distributed-delay systems with
trapezoidal discretization of the history integrals.

The distributed term is evaluated on a fixed offset grid over [-r2, 0] whose
spacing is a multiple of the integration step, so history lookups are array
reads; a time-varying delay masks the kernel outside [-r(t), 0].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    z: np.ndarray | None
    w: np.ndarray | None
    r_of_t: np.ndarray | None

    def state_norms(self):
        return np.linalg.norm(self.x, axis=1)


def _kernel_grid(kernel, taus, n_out, n_in):
    if kernel is None:
        return np.zeros((len(taus), n_out, n_in))
    return np.stack([np.asarray(kernel(t), dtype=float).reshape(n_out, n_in)
                     for t in taus])


def simulate(a_now, a_delay1, kernel, r2: float, phi, horizon: float,
             h: float = 1e-3, nodes: int = 200, r1: float | None = None,
             r_fun=None, w_fun=None, d_in=None, out=None,
             kernel_interval: tuple | None = None) -> Trajectory:
    """Integrate  xdot = A x + B x(t - rd) + int_{-r(t)}^0 K(tau) x(t+tau) dtau
                        + D w(t)
    with classical fourth-order steps and linear interpolation of the history.

    ``phi`` is the initial history (callable on [-r2, 0] or a constant
    vector); ``r_fun`` gives the time-varying delay (defaults to r2); the
    kernel mask follows the indicator convention for tau < -r(t).
    ``out`` optionally maps (x(t), distributed-integral, w) to an output z.
    """
    A = np.asarray(a_now, dtype=float)
    n = A.shape[0]
    B = np.zeros((n, n)) if a_delay1 is None else np.asarray(a_delay1, dtype=float)
    rd = r2 if r1 is None else r1          # pointwise-delay lag
    if nodes % 1:
        raise ValueError("nodes must be an integer")
    spacing = r2 / nodes
    stride = spacing / h
    if abs(stride - round(stride)) > 1e-9:
        raise ValueError("history resolution r2/nodes must be a multiple of h")
    stride = int(round(stride))
    taus = -r2 + spacing * np.arange(nodes + 1)
    Kgrid = _kernel_grid(kernel, taus, n, n)
    trap_w = np.full(nodes + 1, spacing)
    trap_w[[0, -1]] *= 0.5

    steps = int(round(horizon / h))
    hist = nodes * stride
    X = np.zeros((steps + hist + 1, n))
    tgrid = (np.arange(steps + hist + 1) - hist) * h
    if callable(phi):
        for i in range(hist + 1):
            X[i] = np.asarray(phi(tgrid[i]), dtype=float).ravel()
    else:
        X[: hist + 1] = np.asarray(phi, dtype=float).ravel()

    D = None if d_in is None else np.asarray(d_in, dtype=float)
    q = D.shape[1] if D is not None else 0
    wlog = np.zeros((steps + 1, q)) if q else None
    rlog = np.zeros(steps + 1) if r_fun is not None else None

    rd_stride = int(round(rd / h))

    def mask_weights(t):
        if r_fun is None:
            return trap_w
        rt = float(r_fun(t))
        if rt < -1e-12 or rt > r2 + 1e-9:
            raise ValueError(f"r(t) = {rt} outside [0, r2]")
        w = trap_w.copy()
        w[taus < -rt - 1e-12] = 0.0
        return w

    def deriv(i, t, xi):
        """Derivative at time t with stage state xi; history from X."""
        w = mask_weights(t)
        window = X[i - hist:i + 1:stride].copy()
        window[-1] = xi
        distr = np.einsum("k,kij,kj->i", w, Kgrid, window)
        dx = A @ xi + distr
        if np.any(B):
            dx = dx + B @ X[i - rd_stride]
        if D is not None and w_fun is not None:
            dx = dx + D @ np.asarray(w_fun(t), dtype=float).ravel()
        return dx

    for s in range(steps):
        i = hist + s
        t = s * h
        xi = X[i]
        k1_ = deriv(i, t, xi)
        k2_ = deriv(i, t + h / 2, xi + h / 2 * k1_)
        k3_ = deriv(i, t + h / 2, xi + h / 2 * k2_)
        k4_ = deriv(i, t + h, xi + h * k3_)
        X[i + 1] = xi + h / 6 * (k1_ + 2 * k2_ + 2 * k3_ + k4_)
        if q:
            wlog[s] = np.asarray(w_fun(t), dtype=float).ravel() if w_fun else 0.0
        if rlog is not None:
            rlog[s] = float(r_fun(t))

    ts = np.arange(steps + 1) * h
    xs = X[hist:]
    zs = None
    if out is not None:
        zs = np.zeros((steps + 1, np.atleast_1d(out(xs[0], 0.0, 0)).size))
        for s in range(steps + 1):
            i = hist + s
            w = mask_weights(s * h)
            window = X[i - hist:i + 1:stride]
            distr = np.einsum("k,kij,kj->i", w, Kgrid, window)
            wv = np.asarray(w_fun(s * h), dtype=float).ravel() if (w_fun and q) else np.zeros(q)
            zs[s] = np.atleast_1d(out(xs[s], distr, wv))
    return Trajectory(t=ts, x=xs, z=zs, w=wlog, r_of_t=rlog)


def dissipation_check(traj: Trajectory, supply, z=None, slack: float = 0.02):
    """Trapezoidal check of the integral dissipation inequality from zero
    initial data:  integral of s(z, w) >= -slack * integral of |s_w-part|."""
    if traj.w is None or traj.z is None:
        raise ValueError("trajectory must log z and w")
    svals = np.array([supply.evaluate(zi, wi) for zi, wi in zip(traj.z, traj.w)])
    h = traj.t[1] - traj.t[0]
    total = np.trapz(svals, dx=h)
    scale = np.trapz(np.abs(svals), dx=h) + 1e-12
    return total >= -slack * scale, total, scale
