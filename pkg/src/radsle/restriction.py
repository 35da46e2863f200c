"""Restriction martingale for a vertical slit hull.

Frames.  The hull A = [a, a + i ell] lives in the upper half-plane with
the trace seeded at 0 and aimed at i; the Loewner flow runs in the
exterior disc through m(z) = -(z + i)/(z - i) (0 -> 1, i -> infinity).

At time t let h_t = U_t^{-1} g_t, so the tip sits at 1.  The image hull
h_t(A) is a curve attached to the unit circle.  Its uniformizer Phi_t,
fixing 1 and infinity, is computed in a rotated half-plane frame
F(z) = -e^{i psi} m(z) by the geodesic zipper applied to the flowed slit
points, then composed with the Moebius map that restores the two fixed
points.  With Psi = F^{-1} Phi_t F, x_tip = F^{-1}(1):

    M_t = (|Psi'(i)| / |phi_A'(i)|)^{2 h0} * Psi'(x_tip)^{h12} * Z_t,
    log Z_t = (c / 6) int_0^t -S Psi(x_tip) (1 + x_tip^2)^2 / 4 ds,

where h12 = h_{1;2}, 2 h0 = 2 h_{0;1/2} and S is the Schwarzian.  Both
derivative moduli and the Schwarzian term are invariant under the choice
of psi.  The image capacity is t_hat = t + log|Psi'(i)| - log|phi_A'(i)|.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from .cft_params import DomainError, sle_parameters
from .driving import DrivingPath
from .loewner_flow import angle_flow, exact_frozen, mobius_m, mobius_m_inv
from .rng import bridge_normal, check_seed, normal_pair
from .stats import Estimate, estimates_from_sums, map_chunks, reduce_sums

TWO_PI = 2.0 * math.pi


class HullError(ValueError):
    pass


@dataclass(frozen=True)
class SlitHull:
    a: float
    ell: float
    frame: str = "half_plane"

    def __post_init__(self):
        if not (math.isfinite(self.a) and math.isfinite(self.ell)):
            raise HullError("a and ell must be finite")
        if self.a == 0:
            raise HullError("the slit must not start at the seed point 0")
        if self.ell <= 0:
            raise HullError("ell must be positive")
        if self.frame != "half_plane":
            raise HullError("slit hulls are defined in the half-plane frame")

    def heights(self, n: int) -> np.ndarray:
        """Sample heights, denser towards both ends of the slit."""
        u = (np.arange(1, n + 1) - 0.5) / n
        y = self.ell * 0.5 * (1 - np.cos(np.pi * u))
        y[-1] = self.ell
        return y

    def points(self, n: int) -> np.ndarray:
        return self.a + 1j * self.heights(n)


# ----------------------------------------------------------------------------
# jets: (f, f', f'', f''') at a point, and the chain rule


@nb.njit(cache=True, inline="always")
def _chain(f0, f1, f2, f3, z1, z2, z3):
    """Jets of f o z given jets of f at z(p) and of z at p."""
    return f0, f1 * z1, f2 * z1 * z1 + f1 * z2, f3 * z1 * z1 * z1 + 3.0 * f2 * z1 * z2 + f1 * z3


@nb.njit(cache=True, inline="always")
def _sqrt_branch(w, v):
    """sqrt(v) continuing w at infinity: Im >= 0 for w in H, sign(w) on the real line."""
    s = cmath.sqrt(v)
    if s.imag < 0.0 or (s.imag == 0.0 and w.real < 0.0):
        s = -s
    return s


@nb.njit(cache=True, inline="always")
def _sqrt_jets(w0, w1, w2, w3, d2):
    """Jets of s = sqrt(w^2 + d2) given jets of w."""
    s0 = _sqrt_branch(w0, w0 * w0 + d2)
    s1 = w0 * w1 / s0
    s2 = (w0 * w2 + w1 * w1 - s1 * s1) / s0
    s3 = (w0 * w3 + 3.0 * w1 * w2 - 3.0 * s1 * s2) / s0
    return s0, s1, s2, s3


@nb.njit(cache=True, inline="always")
def _mobius_jets(A, B, C, D, z0, z1, z2, z3):
    den = C * z0 + D
    det = A * D - B * C
    f0 = (A * z0 + B) / den
    f1 = det / (den * den)
    f2 = -2.0 * C * f1 / den
    f3 = 6.0 * C * C * f1 / (den * den)
    return _chain(f0, f1, f2, f3, z1, z2, z3)


def schwarzian_from_jets(f1, f2, f3):
    f1 = np.asarray(f1)
    if np.any(f1 == 0):
        raise ZeroDivisionError("Schwarzian undefined where the derivative vanishes")
    return f3 / f1 - 1.5 * (f2 / f1) ** 2


# ----------------------------------------------------------------------------
# closed-form slit map


@dataclass(frozen=True, eq=False)
class NormalizedHullMap:
    """phi_A = T o g_A with g_A(z) = a + sqrt((z - a)^2 + ell^2) and T a
    real Moebius map chosen so that phi_A(0) = 0 and phi_A(i) = i."""

    hull: SlitHull
    mobius: tuple

    def raw_jets(self, z):
        z = np.asarray(z, dtype=complex)
        w = z - self.hull.a
        v = w * w + self.hull.ell ** 2
        s = np.sqrt(v)
        flip = (s.imag < 0) | ((s.imag == 0) & (w.real < 0))
        s = np.where(flip, -s, s)
        s1 = w / s
        s2 = (1 - s1 * s1) / s
        s3 = -3 * s1 * s2 / s
        return self.hull.a + s, s1, s2, s3

    def jets(self, z):
        g0, g1, g2, g3 = self.raw_jets(z)
        A, B, C, D = self.mobius
        den = C * g0 + D
        det = A * D - B * C
        f1 = det / den ** 2
        f2 = -2 * C * f1 / den
        f3 = 6 * C * C * f1 / den ** 2
        return ((A * g0 + B) / den, f1 * g1, f2 * g1 ** 2 + f1 * g2,
                f3 * g1 ** 3 + 3 * f2 * g1 * g2 + f1 * g3)

    def __call__(self, z):
        return self.jets(z)[0]

    def derivative(self, z):
        return self.jets(z)[1]


def _normalizer(q: complex, r: float, x_target: float = 0.0):
    """Real Moebius coefficients (A, B, C, D) sending q -> i and r -> x_target."""
    if not q.imag > 0:
        raise HullError("normalizer needs an interior point")
    rp = (r - q.real) / q.imag
    beta = math.atan(x_target) - math.atan(rp)
    cb, sb = math.cos(beta), math.sin(beta)
    # R_beta o S_q with S_q(z) = (z - Re q) / Im q and R(z) = (z cb + sb)/(-z sb + cb)
    S = np.array([[1.0, -q.real], [0.0, q.imag]])
    R = np.array([[cb, sb], [-sb, cb]])
    M = R @ S
    return float(M[0, 0]), float(M[0, 1]), float(M[1, 0]), float(M[1, 1])


def slit_map(hull: SlitHull) -> NormalizedHullMap:
    tmp = NormalizedHullMap(hull, (1.0, 0.0, 0.0, 1.0))
    r = complex(tmp.raw_jets(0.0)[0])
    q = complex(tmp.raw_jets(1j)[0])
    if abs(r.imag) > 1e-12 or not q.imag > 1e-14:
        raise HullError("slit touches 0 or i; normalizer is singular")
    return NormalizedHullMap(hull, _normalizer(q, r.real, 0.0))


def schwarzian(fmap, z):
    """phi'''/phi' - 3/2 (phi''/phi')^2 for any object exposing ``jets``."""
    _, f1, f2, f3 = fmap.jets(z)
    return schwarzian_from_jets(f1, f2, f3)


@dataclass(frozen=True, eq=False)
class MobiusMap:
    coeffs: tuple

    def jets(self, z):
        A, B, C, D = self.coeffs
        z = np.asarray(z, dtype=complex)
        den = C * z + D
        det = A * D - B * C
        f1 = det / den ** 2
        return (A * z + B) / den, f1, -2 * C * f1 / den, 6 * C * C * f1 / den ** 2


# ----------------------------------------------------------------------------
# zipper


@nb.njit(cache=True)
def zipper_jets(curve, qz, real_mask):
    """Geodesic zipper for a curve starting at 0 in the upper half-plane.

    ``curve`` holds the curve points after the base (ending at the far
    end).  Returns the jets of the unzipping map at ``qz`` and a flag that
    is False if the curve geometry was invalid (a point left the open
    upper half-plane during unzipping).
    """
    n = curve.size
    nq = qz.size
    c = curve.copy()
    q0 = qz.copy()
    q1 = np.ones(nq, dtype=np.complex128)
    q2 = np.zeros(nq, dtype=np.complex128)
    q3 = np.zeros(nq, dtype=np.complex128)
    ok = True
    for k in range(n):
        ck = c[k]
        if not ck.imag > 0.0:
            ok = False
            break
        r2 = ck.real * ck.real + ck.imag * ck.imag
        d2 = (r2 / ck.imag) ** 2
        mob = abs(ck.real) > 1e-14 * math.sqrt(r2)
        x = r2 / ck.real if mob else 0.0
        for j in range(k + 1, n):
            w = c[j]
            if mob:
                if w == x:
                    return q0, q1, q2, q3, False
                w = x * w / (x - w)
            c[j] = _sqrt_branch(w, w * w + d2)
        for j in range(nq):
            z0, z1, z2, z3 = q0[j], q1[j], q2[j], q3[j]
            if mob:
                if z0 == x:
                    return q0, q1, q2, q3, False
                z0, z1, z2, z3 = _mobius_jets(x, 0.0, -1.0, x, z0, z1, z2, z3)
            if z0 * z0 + d2 == 0.0:
                return q0, q1, q2, q3, False
            z0, z1, z2, z3 = _sqrt_jets(z0, z1, z2, z3, d2)
            if real_mask[j]:
                z0 = complex(z0.real, 0.0)
                z1 = complex(z1.real, 0.0)
                z2 = complex(z2.real, 0.0)
                z3 = complex(z3.real, 0.0)
            q0[j], q1[j], q2[j], q3[j] = z0, z1, z2, z3
    return q0, q1, q2, q3, ok


@nb.njit(cache=True)
def frame_quantities(hpts, theta_b, extra):
    """Uniformizer data for the curve h_t(A) in the exterior disc.

    ``hpts`` are the flowed slit points divided by the driver, ``theta_b``
    the angle of the slit base from the driver.  Returns
    (Y, |Psi'(i)|, arg Psi'(i), S Psi(x_tip) (1 + x_tip^2)^2, Phi(extra), ok).
    """
    psi = 0.5 * theta_b if theta_b > math.pi else 0.5 * theta_b + math.pi
    rot = -cmath.exp(-1j * psi)
    # F^{-1}(w) = m^{-1}(-e^{-i psi} w) with m^{-1}(u) = i (u - 1)/(u + 1)
    ub = rot * cmath.exp(1j * theta_b)
    xb = (1j * (ub - 1.0) / (ub + 1.0)).real
    ut = rot
    x_tip = (1j * (ut - 1.0) / (ut + 1.0)).real
    n = hpts.size
    curve = np.empty(n, dtype=np.complex128)
    for j in range(n):
        u = rot * hpts[j]
        curve[j] = 1j * (u - 1.0) / (u + 1.0) - xb
    ne = extra.size
    qz = np.empty(2 + ne, dtype=np.complex128)
    mask = np.zeros(2 + ne, dtype=np.bool_)
    qz[0] = 1j - xb
    qz[1] = x_tip - xb
    mask[1] = True
    for j in range(ne):
        u = rot * extra[j]
        qz[2 + j] = 1j * (u - 1.0) / (u + 1.0) - xb
    q0, q1, q2, q3, ok = zipper_jets(curve, qz, mask)
    out = np.empty(ne, dtype=np.complex128)
    q = q0[0]
    if not ok or not q.imag > 0.0 or not q1[1].real > 0.0:
        return np.nan, np.nan, np.nan, np.nan, out, False
    rp = (q0[1].real - q.real) / q.imag
    beta = math.atan(x_tip) - math.atan(rp)
    Y = (1.0 + x_tip * x_tip) / (1.0 + rp * rp) / q.imag * q1[1].real
    d_i = abs(q1[0]) / q.imag
    arg_i = math.atan2(q1[0].imag, q1[0].real) + 2.0 * beta
    S = (q3[1] / q1[1] - 1.5 * (q2[1] / q1[1]) ** 2).real
    s_term = S * (1.0 + x_tip * x_tip) ** 2
    cb, sb = math.cos(beta), math.sin(beta)
    for j in range(ne):
        z = (q0[2 + j] - q.real) / q.imag
        z = (z * cb + sb) / (-z * sb + cb)
        out[j] = (-(z + 1j) / (z - 1j)) / rot
    return Y, d_i, arg_i, s_term, out, True


# ----------------------------------------------------------------------------
# state along one driver


@dataclass(frozen=True)
class HullGeometry:
    """Precomputed data for simulating one hull."""

    hull: SlitHull
    n_points: int
    W0: np.ndarray
    theta_b0: float
    phiA: NormalizedHullMap
    phiA_i_abs: float
    phiA_i_arg: float
    phiA_0: float


def hull_geometry(hull: SlitHull, n_points: int = 64) -> HullGeometry:
    if n_points < 4:
        raise ValueError("need at least 4 slit points")
    phi = slit_map(hull)
    W0 = mobius_m(hull.points(n_points))
    theta_b0 = float(np.angle(mobius_m(hull.a)) % TWO_PI)
    d_i = complex(phi.derivative(1j))
    return HullGeometry(hull, n_points, W0, theta_b0, phi, abs(d_i), cmath.phase(d_i),
                        float(phi.derivative(0.0).real))


@dataclass(frozen=True)
class TransportedState:
    t: float
    t_hat: float
    Y: float
    d_i: float
    log_z: float
    M: float
    alive: bool


@dataclass(frozen=True)
class RestrictionConfig:
    dt: float = 1e-3
    n_points: int = 64
    hit_eps: float = 1e-4
    z_every: int = 10
    shrink_tol: float = 1e-4
    refine_k: float = 6.0
    max_depth: int = 16
    workers: int = 1

    def __post_init__(self):
        if not (self.dt > 0 and self.hit_eps > 0 and self.z_every >= 1 and self.n_points >= 4
                and self.refine_k >= 0 and 0 <= self.max_depth <= 30):
            raise ValueError("invalid restriction configuration")


@nb.njit(cache=True)
def _slit_end(dt):
    """Radius R with g^{-1}(U) = R U after one frozen step of length dt from the driver."""
    C = 4.0 * math.exp(dt)
    return 0.5 * (C - 2.0 + math.sqrt(C * (C - 4.0)))


@nb.njit(cache=True)
def _hit(g, U, thb, eps, R):
    """True if the next frozen step reaches the hull.

    During a step with driver U the trace grows along the radial segment
    [U, R U] of the current coordinates, so the step hits the hull when
    the polyline base -> g_0 -> g_1 ... meets that segment (or comes
    within ``eps`` of U).
    """
    if thb <= 0.0 or thb >= TWO_PI:
        return True
    Ui = 1.0 / U
    p = complex(math.cos(thb), math.sin(thb))
    for j in range(g.size):
        q = g[j] * Ui
        if abs(q - 1.0) < eps:
            return True
        if (p.imag > 0.0) != (q.imag > 0.0):
            x = p.real - p.imag * (q.real - p.real) / (q.imag - p.imag)
            if 0.0 < x <= R + eps:
                return True
        p = q
    return False


@nb.njit(cache=True)
def _hull_distance(g, U, thb):
    """Distance from U to the polyline base -> g_0 -> g_1 ... of the image hull."""
    Ui = 1.0 / U
    p = complex(math.cos(thb), math.sin(thb))
    best = abs(p - 1.0)
    for j in range(g.size):
        q = g[j] * Ui
        e = q - p
        den = e.real * e.real + e.imag * e.imag
        s = 0.0
        if den > 0.0:
            s = min(1.0, max(0.0, ((1.0 - p.real) * e.real + (0.0 - p.imag) * e.imag) / den))
        best = min(best, abs(p + s * e - 1.0))
        p = q
    return best


@nb.njit(cache=True)
def _hull_step(g, thb, x, D, dt, kappa, seed, idx, k, refine_k, max_depth, hit_eps, stk_l, stk_d, stk_n):
    """Advance the image hull over one driver step, refining near the hull.

    The driver is held at ``x`` and then jumps by ``D``.  While the hull
    lies within refine_k sqrt(kappa tau) of the driver the step is split
    in two with a Brownian-bridge midpoint, recursively up to
    ``max_depth`` halvings, so hits are resolved on the finer scale.
    ``g`` is updated in place.  Returns (base angle, driver value, hit).
    """
    sk = math.sqrt(kappa)
    top = 0
    stk_l[0] = 0
    stk_d[0] = D
    stk_n[0] = 1
    while top >= 0:
        lev = stk_l[top]
        D = stk_d[top]
        node = stk_n[top]
        top -= 1
        tau = dt * 0.5 ** lev
        U = complex(math.cos(x), math.sin(x))
        if lev < max_depth and _hull_distance(g, U, thb) < refine_k * sk * math.sqrt(tau):
            m = 0.5 * D + 0.5 * sk * math.sqrt(tau) * bridge_normal(seed, idx, k, node)
            top += 1
            stk_l[top] = lev + 1
            stk_d[top] = D - m
            stk_n[top] = 2 * node + 1
            top += 1
            stk_l[top] = lev + 1
            stk_d[top] = m
            stk_n[top] = 2 * node
            continue
        if _hit(g, U, thb, hit_eps, _slit_end(tau)):
            return thb, x, True
        for j in range(g.size):
            g[j], _ = exact_frozen(g[j], 0j, U, tau)
        thb, _ = angle_flow(thb, tau)
        thb -= D
        x += D
        if thb <= 0.0 or thb >= TWO_PI:
            return thb, x, True
    return thb, x, False


@nb.njit(cache=True)
def _m_value(Y, d_i, logz, d_iA, h12, two_h0):
    return math.exp(two_h0 * (math.log(d_i) - math.log(d_iA)) + h12 * math.log(Y) + logz)


@nb.njit(cache=True)
def _image_size(g, U, thb):
    b = U * complex(math.cos(thb), math.sin(thb))
    r = 0.0
    for j in range(g.size):
        r = max(r, abs(g[j] - b))
    return r


@nb.njit(cache=True)
def _escaped(g, U, thb, shrink_tol):
    """True once the image hull is tiny compared with its distance to U."""
    return _image_size(g, U, thb) < shrink_tol * _hull_distance(g, U, thb)


@nb.njit(cache=True)
def _path_kernel(xi, dt, kappa, seed, idx, refine_k, max_depth, W0, thb0, rec_steps, hit_eps, z_every, c, h12,
                 two_h0, d_iA, freeze, shrink_tol):
    """Evaluate M along one driver.

    Returns (M at rec times, t_hat at rec times, hit step or -1, escape
    step or -1).  A path escapes once the image of the hull is smaller
    than ``shrink_tol`` times its distance to the driver.  M is then
    frozen at its limit for a vanishing image, |phi_A'(i)|^{-2 h0} Z,
    which it matches up to the squared relative size.
    """
    nr = rec_steps.size
    nsteps = rec_steps[nr - 1]
    Mv = np.zeros(nr)
    th = np.full(nr, np.nan)
    g = W0.copy()
    thb = thb0
    logz = 0.0
    s_prev = 0.0
    extra = np.zeros(0, dtype=np.complex128)
    last_M, last_th, _ = _m_value_from(g, thb, xi[0], extra, logz, d_iA, h12, two_h0)
    if c != 0.0:
        s_prev = _s_integrand(g, thb, xi[0])
    r = 0
    hit_step = -1
    esc_step = -1
    stk_l = np.empty(max_depth + 2, dtype=np.int64)
    stk_d = np.empty(max_depth + 2)
    stk_n = np.empty(max_depth + 2, dtype=np.int64)
    for k in range(nsteps + 1):
        while r < nr and rec_steps[r] == k:
            if hit_step < 0 and esc_step < 0:
                val, that, ok = _m_value_from(g, thb, xi[k], extra, logz, d_iA, h12, two_h0)
                if ok:
                    last_M = val
                    last_th = that
                else:
                    hit_step = k
            if hit_step >= 0 and not freeze:
                Mv[r] = 0.0
            else:
                Mv[r] = last_M
                th[r] = last_th + k * dt
            r += 1
        if k == nsteps:
            break
        if hit_step >= 0 or esc_step >= 0:
            continue
        # one (refined) frozen step, then the next driver jump
        thb, _, hit = _hull_step(g, thb, xi[k], xi[k + 1] - xi[k], dt, kappa, seed, idx, k, refine_k, max_depth,
                                 hit_eps, stk_l, stk_d, stk_n)
        if hit:
            hit_step = k + 1
            continue
        if c != 0.0 and (k + 1) % z_every == 0:
            s_new = _s_integrand(g, thb, xi[k + 1])
            if math.isnan(s_new):
                hit_step = k + 1
                continue
            logz += c / 6.0 * 0.5 * (s_prev + s_new) * z_every * dt
            s_prev = s_new
            val, that, ok = _m_value_from(g, thb, xi[k + 1], extra, logz, d_iA, h12, two_h0)
            if ok:
                last_M = val
                last_th = that
        if _escaped(g, complex(math.cos(xi[k + 1]), math.sin(xi[k + 1])), thb, shrink_tol):
            last_M = math.exp(logz - two_h0 * math.log(d_iA))
            last_th = -math.log(d_iA)
            esc_step = k + 1
    return Mv, th, hit_step, esc_step


@nb.njit(cache=True)
def _s_integrand(g, thb, x):
    Uinv = complex(math.cos(x), -math.sin(x))
    Y, d_i, arg_i, s_term, out, ok = frame_quantities(g * Uinv, thb, np.zeros(0, dtype=np.complex128))
    if not ok:
        return np.nan
    return -0.25 * s_term


@nb.njit(cache=True)
def _m_value_from(g, thb, x, extra, logz, d_iA, h12, two_h0):
    Uinv = complex(math.cos(x), -math.sin(x))
    Y, d_i, arg_i, s_term, out, ok = frame_quantities(g * Uinv, thb, extra)
    if not ok or not Y > 0:
        return 0.0, 0.0, False
    return _m_value(Y, d_i, logz, d_iA, h12, two_h0), math.log(d_i) - math.log(d_iA), True


@nb.njit(cache=True)
def _mc_kernel(i0, count, kappa, dt, W0, thb0, rec_steps, seed, hit_eps, z_every, c, h12, two_h0, d_iA, freeze,
               shrink_tol, refine_k, max_depth):
    nr = rec_steps.size
    nsteps = rec_steps[nr - 1]
    acc = np.zeros((3, nr))
    sdt = math.sqrt(kappa * dt)
    xi = np.zeros(nsteps + 1)
    for p in range(count):
        idx = i0 + np.uint64(p)
        z1 = 0.0
        for k in range(nsteps):
            if (k & 1) == 0:
                z0, z1 = normal_pair(seed, idx, k >> 1, 0)
            else:
                z0 = z1
            xi[k + 1] = xi[k] + sdt * z0
        Mv, th, hit, esc = _path_kernel(xi, dt, kappa, seed, idx, refine_k, max_depth, W0, thb0, rec_steps, hit_eps,
                                        z_every, c, h12, two_h0, d_iA, freeze, shrink_tol)
        for r in range(nr):
            acc[0, r] += Mv[r]
            acc[1, r] += Mv[r] * Mv[r]
            if hit < 0 or hit > rec_steps[r]:
                acc[2, r] += 1.0
    return acc


def _mc_worker(i0, count, *args):
    return _mc_kernel(np.uint64(i0), count, *args)


def _rec_steps(t_list, dt):
    t = np.asarray(t_list, dtype=float)
    if t.ndim != 1 or t.size == 0 or np.any(t < 0) or np.any(np.diff(t) <= 0):
        raise ValueError("t_list must be nonnegative and strictly increasing")
    k = np.rint(t / dt).astype(np.int64)
    if np.any(np.abs(k * dt - t) > 1e-9 * np.maximum(1.0, t)):
        raise ValueError("every time in t_list must be a multiple of dt")
    return k


def _weights(kappa):
    p = sle_parameters(kappa)
    return p.c, p.h12, p.h0half2


@dataclass(frozen=True)
class MartingaleResult:
    times: np.ndarray
    estimates: list
    n_alive: np.ndarray
    M0: float

    def pairwise_ok(self, k: float = 3.0) -> bool:
        e = self.estimates
        for i in range(len(e)):
            for j in range(i + 1, len(e)):
                se = math.hypot(e[i].stderr, e[j].stderr)
                if abs(e[i].mean - e[j].mean) > k * se:
                    return False
        return True


def restriction_check(hull: SlitHull, kappa: float, t_list, N: int, seed: int,
                      cfg: RestrictionConfig = RestrictionConfig()) -> MartingaleResult:
    """Monte Carlo means of M_t(A) on a shared set of paths.

    At kappa = 8/3 M is set to 0 once the trace hits the hull; otherwise
    it is frozen at the last value computed before the hit.
    """
    if N < 2:
        raise ValueError("need N >= 2 samples")
    if not (math.isfinite(kappa) and kappa > 0):
        raise DomainError("kappa must be positive")
    geo = hull_geometry(hull, cfg.n_points)
    c, h12, two_h0 = _weights(kappa)
    freeze = abs(kappa - 8.0 / 3.0) > 1e-12
    rec = _rec_steps(t_list, cfg.dt)
    args = (float(kappa), cfg.dt, geo.W0, geo.theta_b0, rec, np.uint64(check_seed(seed)), cfg.hit_eps,
            cfg.z_every, float(c) if freeze else 0.0, h12, two_h0, geo.phiA_i_abs, freeze, cfg.shrink_tol, cfg.refine_k, cfg.max_depth)
    acc = reduce_sums(map_chunks(_mc_worker, int(N), args, cfg.workers))
    est = estimates_from_sums(acc[0], acc[1], int(N))
    return MartingaleResult(np.asarray(t_list, dtype=float), est, acc[2].astype(int), geo.phiA_0 ** h12)


def martingale_M(hull: SlitHull, path: DrivingPath, kappa: float | None = None,
                 cfg: RestrictionConfig = RestrictionConfig()):
    """M_t(A) on the grid of ``path`` (every step) together with t_hat and the hit index."""
    kappa = path.kappa if kappa is None else kappa
    geo = hull_geometry(hull, cfg.n_points)
    c, h12, two_h0 = _weights(kappa)
    dt = float(path.t_grid[1] - path.t_grid[0])
    if np.ptp(np.diff(path.t_grid)) > 1e-12:
        raise ValueError("martingale_M needs a uniform grid")
    rec = np.arange(path.t_grid.size, dtype=np.int64)
    freeze = abs(kappa - 8.0 / 3.0) > 1e-12
    M, th, hit, esc = _path_kernel(np.ascontiguousarray(path.xi), dt, float(kappa), np.uint64(path.seed),
                                   np.uint64(path.sample_index), cfg.refine_k, cfg.max_depth, geo.W0, geo.theta_b0,
                                   rec, cfg.hit_eps, cfg.z_every, float(c) if freeze else 0.0, h12, two_h0, geo.phiA_i_abs, freeze,
                                   cfg.shrink_tol)
    return M, th, (None if hit < 0 else float(path.t_grid[hit])), (None if esc < 0 else float(path.t_grid[esc]))


# ----------------------------------------------------------------------------
# transported flow and the commutative diagram


@nb.njit(cache=True)
def _hat_field(G, Uh, rate):
    return -rate * G * (G + Uh) / (G - Uh)


@nb.njit(cache=True)
def _node_interp(s, Un, Yn):
    """Driver and squared rate at fraction s of a step, between equally spaced nodes."""
    n = Yn.size - 1
    x = s * n
    i = min(int(x), n - 1)
    f = x - i
    y = Yn[i] + (Yn[i + 1] - Yn[i]) * f
    return Un[i] * (Un[i + 1] / Un[i]) ** f, y * y


@nb.njit(cache=True)
def _transported_kernel(xi, dt, W0, thb0, refs, refs_img, d_iA, arg_iA, hit_eps, nsub, shrink_tol):
    """Route A (zipper) and route B (image Loewner flow) side by side.

    Returns per grid time: t_hat from both routes, |Phi'(tip)|, the
    diagram residual and the index of the first invalid step.
    """
    n = xi.size
    g = W0.copy()
    thb = thb0
    z = refs.copy()
    G = refs_img.copy()
    that_a = np.full(n, np.nan)
    that_b = np.full(n, np.nan)
    Yv = np.full(n, np.nan)
    res = np.full(n, np.nan)
    tb = 0.0
    stop = -1
    no_extra = np.empty(0, dtype=np.complex128)
    for k in range(n):
        U = complex(math.cos(xi[k]), math.sin(xi[k]))
        if _escaped(g, U, thb, shrink_tol):
            break
        Y0, d0, a0, s0, im0, ok0 = frame_quantities(g / U, thb, z / U)
        if not ok0:
            stop = k
            break
        Uh0 = U * cmath.exp(1j * (-arg_iA + a0))
        that_a[k] = k * dt + math.log(d0) - math.log(d_iA)
        that_b[k] = tb
        Yv[k] = Y0
        r = 0.0
        for j in range(z.size):
            r = max(r, abs(Uh0 * im0[j] - G[j]))
        res[k] = r
        if k == n - 1:
            break
        if _hit(g, U, thb, hit_eps, _slit_end(dt)):
            stop = k + 1
            break
        g_new = g.copy()
        z_new = z.copy()
        for j in range(g.size):
            g_new[j], _ = exact_frozen(g[j], 0j, U, dt)
        for j in range(z.size):
            z_new[j], _ = exact_frozen(z[j], 0j, U, dt)
        thb_new, _ = angle_flow(thb, dt)
        Y1, d1, a1, s1, im1, ok1 = frame_quantities(g_new / U, thb_new, z_new / U)
        if not ok1:
            stop = k + 1
            break
        Uh1 = U * cmath.exp(1j * (-arg_iA + a1))
        # exact driver and rate of the image flow at interior nodes of the frozen step
        nn = 2 * nsub
        Un = np.empty(nn + 1, dtype=np.complex128)
        Yn = np.empty(nn + 1)
        Un[0] = Uh0
        Yn[0] = Y0
        Un[nn] = Uh1
        Yn[nn] = Y1
        okn = True
        for q in range(1, nn):
            f = q / nn
            gq = g.copy()
            for j in range(g.size):
                gq[j], _ = exact_frozen(g[j], 0j, U, f * dt)
            thq, _ = angle_flow(thb, f * dt)
            Yq, dq, aq, sq, imq, okq = frame_quantities(gq / U, thq, no_extra)
            if not okq:
                okn = False
                break
            Un[q] = U * cmath.exp(1j * (-arg_iA + aq))
            Yn[q] = Yq
        if not okn:
            stop = k + 1
            break
        # RK4 for the image flow; substeps shrink like |G - Uhat|^2 when a
        # reference image nears the driver
        dmin = 1.0
        for q in range(nn + 1):
            for j in range(G.size):
                dmin = min(dmin, abs(G[j] - Un[q]))
        ns = nsub
        while ns < 65536 and dt * Yn.max() ** 2 / ns > 0.01 * dmin * dmin:
            ns *= 2
        h = dt / ns
        for m in range(ns):
            ua, ra = _node_interp(m / ns, Un, Yn)
            um, rm = _node_interp((m + 0.5) / ns, Un, Yn)
            ub, rb = _node_interp((m + 1.0) / ns, Un, Yn)
            for j in range(G.size):
                x = G[j]
                k1 = _hat_field(x, ua, ra)
                k2 = _hat_field(x + 0.5 * h * k1, um, rm)
                k3 = _hat_field(x + 0.5 * h * k2, um, rm)
                k4 = _hat_field(x + h * k3, ub, rb)
                G[j] = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            tb += h / 6.0 * (ra + 4.0 * rm + rb)
        g = g_new
        z = z_new
        thb = thb_new - (xi[k + 1] - xi[k])
        if thb <= 0.0 or thb >= TWO_PI:
            stop = k + 1
            break
    return that_a, that_b, Yv, res, stop


@dataclass(frozen=True, eq=False)
class TransportedTrajectory:
    times: np.ndarray
    t_hat: np.ndarray
    t_hat_flow: np.ndarray
    Y: np.ndarray
    residual: np.ndarray
    hit_time: float | None

    @property
    def max_residual(self) -> float:
        r = self.residual[np.isfinite(self.residual)]
        return float(r.max()) if r.size else float("nan")


def default_reference_points(hull: SlitHull, n: int = 8) -> np.ndarray:
    """Half-plane points on two rays on the far side of the seed from the hull."""
    s = -math.copysign(1.0, hull.a)
    r = np.linspace(0.6, 2.5, n // 2)
    return np.concatenate([s * r + 0.8j * r, s * 0.3 * r + 1.6j * r])


def evolve_transported(hull: SlitHull, path: DrivingPath, cfg: RestrictionConfig = RestrictionConfig(),
                       refs=None, nsub: int = 4) -> TransportedTrajectory:
    """Track the image hull both through the zipper and through its own Loewner flow.

    The residual at each grid time is max_j |Uhat Phi(h_t(w_j)) - ghat_t(phi_A(w_j))|
    in the exterior disc, over the reference points w_j.
    """
    geo = hull_geometry(hull, cfg.n_points)
    refs = default_reference_points(hull) if refs is None else np.asarray(refs, dtype=complex)
    if np.any(refs.imag <= 0):
        raise ValueError("reference points must lie in the upper half-plane")
    dt = float(path.t_grid[1] - path.t_grid[0])
    if np.ptp(np.diff(path.t_grid)) > 1e-12:
        raise ValueError("evolve_transported needs a uniform grid")
    W_ref = mobius_m(refs)
    W_img = mobius_m(geo.phiA(refs))
    that_a, that_b, Y, res, stop = _transported_kernel(
        np.ascontiguousarray(path.xi), dt, geo.W0, geo.theta_b0, W_ref, W_img, geo.phiA_i_abs,
        geo.phiA_i_arg, cfg.hit_eps, nsub, cfg.shrink_tol)
    hit = None if stop < 0 else float(path.t_grid[stop])
    return TransportedTrajectory(path.t_grid, that_a, that_b, Y, res, hit)


# ----------------------------------------------------------------------------
# avoidance


def avoidance_candidate(hull: SlitHull, kappa: float = 8.0 / 3.0) -> float:
    """|phi_A'(0)|^{h12} |phi_A'(i)|^{2 h0} (tends to 1 as the hull shrinks)."""
    phi = slit_map(hull)
    _, h12, two_h0 = _weights(kappa)
    return float(abs(phi.derivative(0.0)) ** h12 * abs(phi.derivative(1j)) ** two_h0)


@nb.njit(cache=True)
def _avoid_kernel(i0, count, kappa, dt, nsteps, W0, thb0, seed, hit_eps, shrink_tol, refine_k, max_depth):
    sdt = math.sqrt(kappa * dt)
    acc = np.zeros(3)
    stk_l = np.empty(max_depth + 2, dtype=np.int64)
    stk_d = np.empty(max_depth + 2)
    stk_n = np.empty(max_depth + 2, dtype=np.int64)
    for p in range(count):
        idx = i0 + np.uint64(p)
        g = W0.copy()
        thb = thb0
        xi = 0.0
        z1 = 0.0
        hit = False
        escaped = False
        for k in range(nsteps):
            if (k & 1) == 0:
                z0, z1 = normal_pair(seed, idx, k >> 1, 0)
            else:
                z0 = z1
            thb, xi, hit = _hull_step(g, thb, xi, sdt * z0, dt, kappa, seed, idx, k, refine_k, max_depth, hit_eps,
                                      stk_l, stk_d, stk_n)
            if hit:
                break
            if _escaped(g, complex(math.cos(xi), math.sin(xi)), thb, shrink_tol):
                escaped = True
                break
        if not hit:
            acc[0] += 1.0
            acc[1] += 1.0
            if not escaped:
                acc[2] += 1.0
    return acc


def _avoid_worker(i0, count, *args):
    return _avoid_kernel(np.uint64(i0), count, *args)


def avoidance_probability(hull: SlitHull, kappa: float = 8.0 / 3.0, t_max: float = 8.0, N: int = 10000,
                          seed: int = 0, cfg: RestrictionConfig = RestrictionConfig()) -> dict:
    """Frequency of paths that avoid the hull up to t_max, with the closed-form candidate.

    ``unresolved`` is the fraction of paths that neither hit the hull nor
    escaped it by t_max; it bounds the truncation error of ``freq`` as an
    estimate of the probability of never hitting.
    """
    geo = hull_geometry(hull, cfg.n_points)
    nsteps = int(round(t_max / cfg.dt))
    acc = reduce_sums(map_chunks(_avoid_worker, int(N), (float(kappa), cfg.dt, nsteps, geo.W0, geo.theta_b0,
                                                          np.uint64(check_seed(seed)), cfg.hit_eps, cfg.shrink_tol,
                                                          cfg.refine_k, cfg.max_depth),
                                    cfg.workers))
    (est,) = estimates_from_sums(acc[:1], acc[1:], int(N))
    return {"freq": est.mean, "stderr": est.stderr, "n": int(N), "candidate": avoidance_candidate(hull, kappa),
            "t_max": float(t_max), "unresolved": float(acc[2] / N)}
