"""Radial Loewner flow in the exterior disc {|z| >= 1}.

    dg_t(z) = -g_t(z) (g_t(z) + U_t) / (g_t(z) - U_t) dt,   U_t = exp(i xi_t)

The driver is held at its left value on every grid step.  With U frozen
the flow conserves e^t (g + U)^2 / (g U), which gives a closed-form step
(``integrator="exact"``); the default ``"rk4_adaptive"`` integrates the
frozen-U equation with RK4 sub-steps of size ``step_factor * |g - U|^2``.

Point status codes: 0 alive, 1 swallowed, 2 swallowed after step underflow.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from .driving import DrivingPath

ALIVE, SWALLOWED, UNDERFLOW = 0, 1, 2
TWO_PI = 2.0 * math.pi
_INTEGRATORS = ("rk4_adaptive", "exact")


@dataclass(frozen=True)
class FlowConfig:
    dt_base: float = 1e-3
    eps_swallow: float = 1e-4
    integrator: str = "rk4_adaptive"
    dt_floor: float = 1e-9
    step_factor: float = 0.01
    eps_lift: float = 1e-6

    def __post_init__(self):
        if not 0 < self.dt_floor <= self.dt_base:
            raise ValueError("need 0 < dt_floor <= dt_base")
        if self.eps_swallow <= 0 or self.step_factor <= 0:
            raise ValueError("eps_swallow and step_factor must be positive")
        if self.integrator not in _INTEGRATORS:
            raise ValueError(f"integrator must be one of {_INTEGRATORS}")

    @property
    def method(self) -> int:
        return _INTEGRATORS.index(self.integrator)


# ----------------------------------------------------------------------------
# geometry frames


@dataclass(frozen=True)
class GeometryFrame:
    tag: str
    x0: complex
    z_star: complex


EXTERIOR_DISC = GeometryFrame("exterior_disc", 1.0 + 0j, complex("inf"))
HALF_PLANE = GeometryFrame("half_plane", 0j, 1j)


def mobius_m(z):
    """Half-plane to exterior disc, 0 -> 1 and i -> infinity."""
    return -(z + 1j) / (z - 1j)


def mobius_m_inv(w):
    return 1j * (w - 1) / (w + 1)


def mobius_m_prime(z):
    return 2j / (z - 1j) ** 2


# ----------------------------------------------------------------------------
# kernels


@nb.njit(cache=True, inline="always")
def _field(g, U):
    return -g * (g + U) / (g - U)


@nb.njit(cache=True, inline="always")
def _dfield(g, U):
    d = g - U
    return -(g * g - 2.0 * g * U - U * U) / (d * d)


@nb.njit(cache=True)
def rk4_frozen(g, lg, U, tau, c, dt_floor, eps):
    """RK4 for (g, log g') over time ``tau`` with U fixed.

    Returns (g, lg, status, time_used).
    """
    t = 0.0
    while t < tau:
        d = abs(g - U)
        if d <= eps:
            return g, lg, SWALLOWED, t
        h = min(tau - t, c * d * d)
        if h < dt_floor and h < tau - t:
            return g, lg, UNDERFLOW, t
        k1 = _field(g, U)
        l1 = _dfield(g, U)
        g2 = g + 0.5 * h * k1
        k2 = _field(g2, U)
        l2 = _dfield(g2, U)
        g3 = g + 0.5 * h * k2
        k3 = _field(g3, U)
        l3 = _dfield(g3, U)
        g4 = g + h * k3
        k4 = _field(g4, U)
        l4 = _dfield(g4, U)
        g = g + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        lg = lg + h / 6.0 * (l1 + 2.0 * l2 + 2.0 * l3 + l4)
        t += h
    if abs(g - U) <= eps:
        return g, lg, SWALLOWED, t
    return g, lg, ALIVE, t


@nb.njit(cache=True, inline="always")
def _pick_root(a, b, side):
    """Choose between the roots q and 1/q of the frozen-step quadratic.

    The frozen flow keeps the sign of Im(g/U), and the two roots have
    opposite signs there; the modulus test only decides on the real axis.
    """
    if side > 0.0:
        return a if a.imag > b.imag else b
    if side < 0.0:
        return a if a.imag < b.imag else b
    return a if abs(a) >= abs(b) else b


@nb.njit(cache=True)
def exact_frozen(g, lg, U, tau):
    """Closed-form frozen-U step for an interior point (|g| > 1)."""
    q0 = g / U
    C = math.exp(-tau) * (q0 + 1.0) ** 2 / q0
    r = np.sqrt(C * (C - 4.0) + 0j)
    q = _pick_root(0.5 * (C - 2.0 + r), 0.5 * (C - 2.0 - r), q0.imag)
    dq = math.exp(-tau) * (q0 * q0 - 1.0) * q * q / (q0 * q0 * (q * q - 1.0))
    return U * q, lg + np.log(dq)


@nb.njit(cache=True)
def exact_reverse(w, U, tau):
    """Inverse of the frozen-U flow over ``tau``: returns z with g_tau(z) = w."""
    q = w / U
    C = math.exp(tau) * (q + 1.0) ** 2 / q
    r = np.sqrt(C * (C - 4.0) + 0j)
    return U * _pick_root(0.5 * (C - 2.0 + r), 0.5 * (C - 2.0 - r), q.imag)


@nb.njit(cache=True)
def angle_flow(theta, tau):
    """Exact solution of theta' = cot(theta/2) on (0, 2 pi); cos(theta/2) decays like e^{-t/2}.

    Also returns the integral of 1/(2 sin^2(theta_s/2)) over the step.
    """
    phi = theta if theta <= math.pi else TWO_PI - theta
    s = math.sin(0.5 * phi)
    u = math.cos(0.5 * phi)
    em = math.exp(-tau)
    s2 = s * s * em - math.expm1(-tau)
    phin = 2.0 * math.atan2(math.sqrt(s2), u * math.exp(-0.5 * tau))
    pot = 0.5 * math.log1p(math.expm1(tau) / (s * s))
    return (phin if theta <= math.pi else TWO_PI - phin), pot


@nb.njit(cache=True)
def _flow_kernel(z0s, boundary, xi, t, method, eps, dt_floor, c):
    n = z0s.size
    nt = t.size
    G = np.empty((n, nt), dtype=np.complex128)
    LG = np.zeros((n, nt), dtype=np.complex128)
    status = np.zeros(n, dtype=np.int64)
    tau = np.full(n, np.nan)
    for p in range(n):
        g = z0s[p]
        lg = 0j
        G[p, 0] = g
        theta = 0.0
        if boundary[p]:
            theta = math.atan2(g.imag, g.real) % TWO_PI
            g = complex(math.cos(theta), math.sin(theta))
        for k in range(nt - 1):
            if status[p] == ALIVE:
                U = complex(math.cos(xi[k]), math.sin(xi[k]))
                dt = t[k + 1] - t[k]
                if boundary[p]:
                    if k > 0:
                        theta -= xi[k] - xi[k - 1]
                    if theta <= 0.0 or theta >= TWO_PI:
                        status[p] = SWALLOWED
                        tau[p] = t[k]
                    else:
                        # complex integration, then project back on the circle
                        if method == 0:
                            g, lg, st, used = rk4_frozen(g, lg, U, dt, c, dt_floor, eps)
                        else:
                            g, lg = exact_frozen_boundary(g, lg, U, dt)
                            st = ALIVE
                            used = dt
                        g = g / abs(g)
                        theta = math.atan2((g / U).imag, (g / U).real) % TWO_PI
                        if st != ALIVE:
                            status[p] = st
                            tau[p] = t[k] + used
                else:
                    if method == 0:
                        g, lg, st, used = rk4_frozen(g, lg, U, dt, c, dt_floor, eps)
                    else:
                        g, lg = exact_frozen(g, lg, U, dt)
                        st = ALIVE if abs(g - U) > eps else SWALLOWED
                        used = dt
                    if st != ALIVE:
                        status[p] = st
                        tau[p] = t[k] + used
            G[p, k + 1] = g
            LG[p, k + 1] = lg
    return G, LG, status, tau


@nb.njit(cache=True)
def exact_frozen_boundary(g, lg, U, tau):
    """Frozen-U step for a point on the unit circle via the angle solution."""
    q = g / U
    theta = math.atan2(q.imag, q.real) % TWO_PI
    thn, pot = angle_flow(theta, tau)
    return U * complex(math.cos(thn), math.sin(thn)), lg - pot


# ----------------------------------------------------------------------------
# public API


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Grid-time history of tracked points (rows) under one driver."""

    times: np.ndarray
    z0: np.ndarray
    g: np.ndarray
    log_deriv: np.ndarray
    status: np.ndarray
    tau: np.ndarray

    @property
    def alive(self) -> np.ndarray:
        return self.status == ALIVE

    def alive_mask(self) -> np.ndarray:
        """(points, times) mask of grid times strictly before swallowing."""
        tau = np.where(np.isnan(self.tau), np.inf, self.tau)
        return self.times[None, :] < tau[:, None]


def _as_points(z0):
    z = np.atleast_1d(np.asarray(z0, dtype=complex)).ravel()
    if np.any(np.abs(z) < 1.0 - 1e-12):
        raise ValueError("points must satisfy |z| >= 1 in the exterior-disc frame")
    if np.any(np.abs(z - 1.0) < 1e-14):
        raise ValueError("z0 = 1 is the seed of the trace")
    return z


def evolve_points(z0, path: DrivingPath, cfg: FlowConfig = FlowConfig()) -> Trajectory:
    """Flow every point of ``z0`` along ``path``.

    Points with |z0| = 1 (to 1e-12) are boundary points; they are kept on
    the circle and swallowed when the driver jumps across them.
    """
    z = _as_points(z0)
    boundary = np.abs(np.abs(z) - 1.0) <= 1e-12
    G, LG, status, tau = _flow_kernel(
        z, boundary, path.xi, path.t_grid, cfg.method, cfg.eps_swallow, cfg.dt_floor, cfg.step_factor
    )
    return Trajectory(path.t_grid, z, G, LG, status, tau)


def evolve_point(z0: complex, path: DrivingPath, cfg: FlowConfig = FlowConfig()) -> Trajectory:
    return evolve_points([z0], path, cfg)


def evolve_log_derivative(z0: complex, path: DrivingPath, cfg: FlowConfig = FlowConfig()) -> np.ndarray:
    """log g_t'(z0) on the grid (NaN-free up to swallowing, then frozen)."""
    return evolve_points([z0], path, cfg).log_deriv[0]


def h_map(traj: Trajectory, path: DrivingPath) -> np.ndarray:
    """Rotated map U_t^{-1} g_t, which sends the trace tip back to 1."""
    return traj.g * np.exp(-1j * path.xi)[None, :]


def log_deriv_rate_on_circle(theta):
    """Re d(log g')/dt for a boundary point at angle theta from the driver."""
    return -0.5 / np.sin(0.5 * np.asarray(theta)) ** 2


@dataclass(frozen=True, eq=False)
class RadialTrace:
    times: np.ndarray
    gamma: np.ndarray


class TraceError(RuntimeError):
    pass


@nb.njit(cache=True)
def _trace_kernel(n, xi, t, lift, method, c):
    # the tip at grid time t_n sits over the last held driver value xi[n-1]
    if n == 0:
        return complex(1.0 + lift, 0.0)
    U = complex(math.cos(xi[n - 1]), math.sin(xi[n - 1]))
    w = U * (1.0 + lift)
    for k in range(n - 1, -1, -1):
        U = complex(math.cos(xi[k]), math.sin(xi[k]))
        dt = t[k + 1] - t[k]
        if method == 1:
            w = exact_reverse(w, U, dt)
        else:
            s = 0.0
            while s < dt:
                d = abs(w - U)
                h = min(dt - s, c * d * d)
                k1 = -_field(w, U)
                k2 = -_field(w + 0.5 * h * k1, U)
                k3 = -_field(w + 0.5 * h * k2, U)
                k4 = -_field(w + h * k3, U)
                w = w + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
                s += h
        if not (abs(w) < 1e12):
            return complex(np.nan, np.nan)
    return w


def trace_point(t: float, path: DrivingPath, cfg: FlowConfig = FlowConfig()) -> complex:
    """gamma(t) by running the reverse flow from just above the driver."""
    n = path.index_at(t)
    if n < 0 or t > path.t_max + 1e-12:
        raise ValueError("t outside the driver range")
    lift = 0.0 if cfg.integrator == "exact" else cfg.eps_lift
    w = _trace_kernel(n, path.xi, path.t_grid, lift, cfg.method, cfg.step_factor)
    if not np.isfinite(w):
        raise TraceError(f"reverse flow blew up at t={t}")
    return complex(w)


def trace(path: DrivingPath, cfg: FlowConfig = FlowConfig(), n_points: int | None = None) -> RadialTrace:
    idx = np.arange(path.t_grid.size)
    if n_points is not None and n_points < idx.size:
        idx = np.unique(np.round(np.linspace(0, idx.size - 1, n_points)).astype(int))
    gam = np.array([trace_point(path.t_grid[i], path, cfg) for i in idx])
    return RadialTrace(path.t_grid[idx], gam)


# ----------------------------------------------------------------------------
# half-plane conjugation


def half_plane_driver(path: DrivingPath) -> np.ndarray:
    """Half-plane driving point m^{-1}(U_t) = -tan(xi_t / 2)."""
    return -np.tan(0.5 * path.xi)


def half_plane_field(G, eta):
    return 0.5 * (1.0 + G * G) * (1.0 + eta * G) / (G - eta)


@nb.njit(cache=True)
def _half_plane_step(G, eta, tau, c):
    s = 0.0
    while s < tau:
        d = abs(G - eta)
        h = min(tau - s, c * d * d / (1.0 + abs(G) ** 2))
        k1 = 0.5 * (1.0 + G * G) * (1.0 + eta * G) / (G - eta)
        G2 = G + 0.5 * h * k1
        k2 = 0.5 * (1.0 + G2 * G2) * (1.0 + eta * G2) / (G2 - eta)
        G3 = G + 0.5 * h * k2
        k3 = 0.5 * (1.0 + G3 * G3) * (1.0 + eta * G3) / (G3 - eta)
        G4 = G + h * k3
        k4 = 0.5 * (1.0 + G4 * G4) * (1.0 + eta * G4) / (G4 - eta)
        G = G + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        s += h
    return G


class WindowSkipped(RuntimeWarning):
    pass


def to_half_plane(traj: Trajectory) -> np.ndarray:
    """Conjugate disc-frame trajectories into the half-plane frame."""
    return mobius_m_inv(traj.g)


def half_plane_residual(z_half, path: DrivingPath, cfg: FlowConfig = FlowConfig(), xi_bound: float = 2.0):
    """Per-unit-time residual of the half-plane equation along the conjugated flow.

    ``z_half`` are half-plane points.  Each grid step of the conjugated
    disc flow is compared with an independent RK4 solve of
    dG = (1 + G^2)/2 (1 + eta G)/(G - eta) dt, eta = -tan(xi/2), and the
    largest discrepancy divided by the step length is returned per point.
    Raises ``WindowSkipped`` if |xi| reaches ``xi_bound``.
    """
    if np.max(np.abs(path.xi)) >= xi_bound:
        raise WindowSkipped("driver left the window |xi| < %g" % xi_bound)
    z = np.atleast_1d(np.asarray(z_half, dtype=complex))
    traj = evolve_points(mobius_m(z), path, cfg)
    G = to_half_plane(traj)
    eta = half_plane_driver(path)
    dt = np.diff(path.t_grid)
    c_ref = min(cfg.step_factor, 0.002)
    res = np.zeros(z.size)
    for p in range(z.size):
        for k in range(dt.size):
            if traj.status[p] != ALIVE and traj.tau[p] <= path.t_grid[k + 1]:
                break
            pred = _half_plane_step(G[p, k], eta[k], dt[k], c_ref)
            res[p] = max(res[p], abs(pred - G[p, k + 1]) / dt[k])
    return res


# ----------------------------------------------------------------------------
# transport of the (sigma, rho) pair under a conformal map


@dataclass(frozen=True)
class TransportedFields:
    """Fields pushed forward by phi, sampled at image points phi(z)."""

    kappa: float
    sigma: object
    rho: object
    phi: object
    dphi: object
    d2phi: object

    def at(self, z):
        """Return (phi(z), sigma^phi(phi(z)), rho^phi(phi(z)))."""
        p1 = self.dphi(z)
        r = self.rho(z)
        return self.phi(z), p1 * self.sigma(z) + 0.5 * self.kappa * self.d2phi(z) * r * r, p1 * r


def transport_vector_field(sigma, rho, phi, dphi, d2phi, kappa):
    """Push (sigma, rho) forward: rho^phi o phi = phi' rho, sigma^phi o phi = phi' sigma + kappa/2 phi'' rho^2."""
    for f, name in ((phi, "phi"), (dphi, "dphi"), (d2phi, "d2phi")):
        if f is None:
            raise ValueError(f"{name} is required")
    return TransportedFields(float(kappa), sigma, rho, phi, dphi, d2phi)
