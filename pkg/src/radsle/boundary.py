"""Boundary-point observables: the angle process, Feynman-Kac weights and
the decay exponent of f_h(theta, t) = E[|h_t'(x)|^h 1{tau_x > t}].

A boundary point x = e^{i theta_0} is followed through its angle to the
driver, g_t(x) = U_t e^{i theta_t}, which solves

    d theta = cot(theta / 2) dt - d xi,

and |g_t'(x)| = exp(-int_0^t ds / (2 sin^2(theta_s / 2))).

The driver is held constant on each grid step, so a step is a jump
theta -> theta - dxi followed by the exact deterministic flow
cos(theta/2) -> cos(theta/2) e^{-dt/2}; the potential integral over the
step is also exact.

Two discretisations of the killing are offered for Monte Carlo:

``scheme="refined"`` (default)
    Near the boundary the driver step is refined by Brownian-bridge
    midpoints, the bridge probability of touching the boundary between
    two refined nodes is folded into the weight, and inside the layer
    theta < eps_layer the point is moved out to 2 eps_layer with the
    weight (theta / 2 eps_layer)^{delta_+(h)}.  That factor is the ratio
    of the local harmonic function of the killed, weighted process, which
    behaves like theta^{delta_+} at the boundary.
``scheme="cut"``
    Plain killing when theta leaves (theta_cut, 2 pi - theta_cut).  Kept
    for comparison; at kappa = 6 it overestimates the decay because the
    survival probability of the Bessel-like process depends on the cut
    through a power of theta_cut.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .cft_params import DomainError, delta_pm, exponent_bundle
from .driving import DrivingPath
from .loewner_flow import angle_flow
from .rng import bridge_normal, check_seed, normal_pair
from .stats import Estimate, estimates_from_sums, map_chunks, reduce_sums

TWO_PI = 2.0 * math.pi
SCHEMES = ("refined", "cut")


@dataclass(frozen=True)
class AngleState:
    theta: float
    fk_log_weight: float = 0.0
    alive: bool = True
    tau: float | None = None
    t: float = 0.0


def theta_step(state: AngleState, dxi: float, dt: float, kappa: float, h: float = 0.0,
               theta_cut: float = 1e-3) -> AngleState:
    """Advance one driver step: jump by -dxi, then flow exactly for dt.

    ``kappa`` only enters through ``dxi`` and is accepted for symmetry with
    the Monte Carlo kernels.
    """
    if not state.alive:
        return state
    if not dt > 0:
        raise ValueError("dt must be positive")
    th = state.theta - dxi
    if not (theta_cut < th < TWO_PI - theta_cut):
        return AngleState(th, state.fk_log_weight, False, state.t, state.t + dt)
    th, pot = angle_flow(th, dt)
    return AngleState(th, state.fk_log_weight - h * pot, True, None, state.t + dt)


@dataclass(frozen=True, eq=False)
class AnglePath:
    times: np.ndarray
    theta: np.ndarray
    fk_log_weight: np.ndarray
    alive: np.ndarray
    tau: float | None


def theta_path(path: DrivingPath, theta0: float, h: float = 1.0, theta_cut: float = 1e-3) -> AnglePath:
    """Angle process along a given driver on its grid (no refinement).

    ``theta[k]`` is measured from the driver value held on the step that
    ends at ``t_grid[k]``, matching the complex flow sampled on the grid.
    """
    if not 0 < theta0 < TWO_PI:
        raise DomainError("theta0 must lie in (0, 2 pi)")
    n = path.t_grid.size
    th = np.full(n, np.nan)
    lw = np.zeros(n)
    alive = np.zeros(n, dtype=bool)
    st = AngleState(float(theta0))
    th[0], alive[0] = theta0, True
    dxi = np.concatenate([[0.0], np.diff(path.xi)])
    dts = np.diff(path.t_grid)
    for k in range(n - 1):
        st = theta_step(st, dxi[k], dts[k], path.kappa, h, theta_cut)
        if not st.alive:
            break
        th[k + 1], lw[k + 1], alive[k + 1] = st.theta, st.fk_log_weight, True
    return AnglePath(path.t_grid, th, lw, alive, st.tau)


# ----------------------------------------------------------------------------
# Monte Carlo kernels


@nb.njit(cache=True)
def _depth_tables(kappa, dt, K, maxdepth):
    """Per refinement depth d (step dt / 2^d): refine threshold, bridge sd and flow constants."""
    tab = np.empty((8, maxdepth + 1))
    sk = math.sqrt(kappa)
    for d in range(maxdepth + 1):
        tau = dt / 2.0 ** d
        tab[0, d] = K * sk * math.sqrt(tau)
        tab[1, d] = 0.5 * sk * math.sqrt(tau)
        tab[2, d] = math.exp(-tau)
        tab[3, d] = math.exp(-0.5 * tau)
        tab[4, d] = -math.expm1(-tau)
        tab[5, d] = math.expm1(tau)
        tab[6, d] = 2.0 / (kappa * tau)
        tab[7, d] = tau
    return tab


@nb.njit(cache=True, inline="always")
def _flow_tab(dn, tab, d, need_pot):
    """Exact flow of the distance dn in (0, pi] over one table step; returns (dn, potential)."""
    s = math.sin(0.5 * dn)
    u = math.cos(0.5 * dn)
    s2 = s * s * tab[2, d] + tab[4, d]
    pot = 0.5 * math.log1p(tab[5, d] / (s * s)) if need_pot else 0.0
    return 2.0 * math.atan2(math.sqrt(s2), u * tab[3, d]), pot


@nb.njit(cache=True)
def _advance(th, logw, hs, dplus, D, tab, seed, idx, k, refined, eps_layer, maxdepth, theta_cut,
             need_pot, stk_d, stk_l, stk_v):
    """One driver step with increment D.  Returns (theta, alive)."""
    nh = hs.size
    if not refined:
        thn = th - D
        if thn <= theta_cut or thn >= TWO_PI - theta_cut:
            return thn, False
        dn = min(thn, TWO_PI - thn)
        dn, pot = _flow_tab(dn, tab, 0, need_pot)
        for j in range(nh):
            logw[j] -= hs[j] * pot
        return (dn if thn < math.pi else TWO_PI - dn), True
    L = 2.0 * eps_layer
    top = 0
    stk_d[0] = D
    stk_l[0] = 1
    stk_v[0] = 0
    while top >= 0:
        D = stk_d[top]
        node = stk_l[top]
        lev = stk_v[top]
        top -= 1
        tb = th - D
        dist = min(th, TWO_PI - th, tb, TWO_PI - tb)
        if dist < tab[0, lev] and lev < maxdepth:
            m = 0.5 * D + tab[1, lev] * bridge_normal(seed, idx, k, node)
            top += 1
            stk_d[top] = D - m
            stk_l[top] = 2 * node + 1
            stk_v[top] = lev + 1
            top += 1
            stk_d[top] = m
            stk_l[top] = 2 * node
            stk_v[top] = lev + 1
            continue
        thn = th - D
        if thn <= 0.0 or thn >= TWO_PI:
            return thn, False
        # probability that the bridge touched the nearer boundary
        if th < math.pi and thn < math.pi:
            arg = th * thn * tab[6, lev]
        elif th > math.pi and thn > math.pi:
            arg = (TWO_PI - th) * (TWO_PI - thn) * tab[6, lev]
        else:
            arg = 100.0
        lc = math.log1p(-math.exp(-arg)) if arg < 40.0 else 0.0
        dn = min(thn, TWO_PI - thn)
        le = 0.0
        if dn < eps_layer:
            le = math.log(dn / L)
            dn = L
        dn, pot = _flow_tab(dn, tab, lev, need_pot)
        for j in range(nh):
            logw[j] += lc + dplus[j] * le - hs[j] * pot
        th = dn if thn < math.pi else TWO_PI - dn
    return th, True


@nb.njit(cache=True)
def _fh_kernel(i0, count, kappa, hs, dplus, theta0, dt, nsteps, rec_steps, seed, refined, eps_layer,
               K, maxdepth, theta_cut):
    nh = hs.size
    nr = rec_steps.size
    acc = np.zeros((2, nh, nr))
    tab = _depth_tables(kappa, dt, K, maxdepth)
    need_pot = np.any(hs != 0.0)
    sdt = math.sqrt(kappa * dt)
    stk_d = np.empty(maxdepth + 2)
    stk_l = np.empty(maxdepth + 2, dtype=np.int64)
    stk_v = np.empty(maxdepth + 2, dtype=np.int64)
    logw = np.zeros(nh)
    for p in range(count):
        idx = i0 + np.uint64(p)
        th = theta0
        logw[:] = 0.0
        alive = True
        r = 0
        z1 = 0.0
        for k in range(nsteps + 1):
            while r < nr and rec_steps[r] == k:
                if alive:
                    for j in range(nh):
                        w = math.exp(logw[j])
                        acc[0, j, r] += w
                        acc[1, j, r] += w * w
                r += 1
            if r == nr or not alive or k == nsteps:
                break
            if (k & 1) == 0:
                z0, z1 = normal_pair(seed, idx, k >> 1, 0)
            else:
                z0 = z1
            th, alive = _advance(th, logw, hs, dplus, sdt * z0, tab, seed, idx, k, refined,
                                 eps_layer, maxdepth, theta_cut, need_pot, stk_d, stk_l, stk_v)
    return acc


@nb.njit(cache=True)
def _final_kernel(i0, count, kappa, hs, dplus, theta0, dt, nsteps, seed, refined, eps_layer, K,
                  maxdepth, theta_cut):
    nh = hs.size
    thetas = np.empty(count)
    weights = np.zeros((nh, count))
    tab = _depth_tables(kappa, dt, K, maxdepth)
    need_pot = np.any(hs != 0.0)
    sdt = math.sqrt(kappa * dt)
    stk_d = np.empty(maxdepth + 2)
    stk_l = np.empty(maxdepth + 2, dtype=np.int64)
    stk_v = np.empty(maxdepth + 2, dtype=np.int64)
    logw = np.zeros(nh)
    for p in range(count):
        idx = i0 + np.uint64(p)
        th = theta0
        logw[:] = 0.0
        alive = True
        z1 = 0.0
        for k in range(nsteps):
            if (k & 1) == 0:
                z0, z1 = normal_pair(seed, idx, k >> 1, 0)
            else:
                z0 = z1
            th, alive = _advance(th, logw, hs, dplus, sdt * z0, tab, seed, idx, k, refined,
                                 eps_layer, maxdepth, theta_cut, need_pot, stk_d, stk_l, stk_v)
            if not alive:
                break
        thetas[p] = th
        if alive:
            for j in range(nh):
                weights[j, p] = math.exp(logw[j])
    return thetas, weights


@dataclass(frozen=True)
class SimConfig:
    """Discretisation of the angle-process Monte Carlo."""

    dt: float = 1e-3
    scheme: str = "refined"
    theta_cut: float = 1e-3
    eps_layer: float = 0.02
    refine_k: float = 6.0
    max_depth: int = 30
    workers: int = 1

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if not (self.dt > 0 and self.theta_cut > 0 and self.eps_layer > 0 and self.refine_k > 0):
            raise ValueError("dt, theta_cut, eps_layer and refine_k must be positive")
        if not 1 <= self.max_depth <= 60:
            raise ValueError("max_depth must be in [1, 60]")


def _kernel_args(kappa, hs, theta0, seed, cfg):
    if not (math.isfinite(kappa) and kappa > 0):
        raise DomainError(f"kappa must be positive, got {kappa}")
    if not 0 < theta0 < TWO_PI:
        raise DomainError("theta0 must lie in (0, 2 pi)")
    hs = np.atleast_1d(np.asarray(hs, dtype=float))
    dplus = np.array([delta_pm(kappa, h)[0] for h in hs])
    return hs, dplus, np.uint64(check_seed(seed))


def _steps_for(t_list, dt):
    t = np.asarray(t_list, dtype=float)
    if t.ndim != 1 or t.size == 0 or np.any(t < 0) or np.any(np.diff(t) <= 0):
        raise ValueError("t_list must be nonnegative and strictly increasing")
    k = np.rint(t / dt).astype(np.int64)
    if np.any(np.abs(k * dt - t) > 1e-9 * np.maximum(1.0, t)):
        raise ValueError("every time in t_list must be a multiple of dt")
    return k


def _fh_worker(i0, count, *args):
    return _fh_kernel(np.uint64(i0), count, *args)


def estimate_f_h_multi(kappa, hs, theta0, t_list, N, seed, cfg: SimConfig = SimConfig()):
    """Estimates of f_h(theta0, t) for several h on one shared set of paths.

    Returns a list (one per h) of lists of ``Estimate`` (one per t).
    """
    if N < 2:
        raise ValueError("need N >= 2 samples")
    hs, dplus, seed = _kernel_args(float(kappa), hs, float(theta0), seed, cfg)
    rec = _steps_for(t_list, cfg.dt)
    args = (float(kappa), hs, dplus, float(theta0), cfg.dt, int(rec[-1]), rec, seed,
            cfg.scheme == "refined", cfg.eps_layer, cfg.refine_k, cfg.max_depth, cfg.theta_cut)
    acc = reduce_sums(map_chunks(_fh_worker, int(N), args, cfg.workers))
    return [estimates_from_sums(acc[0, j], acc[1, j], int(N)) for j in range(hs.size)]


def estimate_f_h(kappa, h, theta0, t_list, N, seed, cfg: SimConfig = SimConfig()) -> list[Estimate]:
    return estimate_f_h_multi(kappa, [h], theta0, t_list, N, seed, cfg)[0]


def _final_worker(i0, count, *args):
    return _final_kernel(np.uint64(i0), count, *args)


def sample_final(kappa, hs, theta0, t, N, seed, cfg: SimConfig = SimConfig()):
    """Final angles and weights exp(FK) 1{alive} at time t, per sample."""
    hs, dplus, seed = _kernel_args(float(kappa), hs, float(theta0), seed, cfg)
    nsteps = int(_steps_for([t], cfg.dt)[0])
    parts = map_chunks(_final_worker, int(N), (float(kappa), hs, dplus, float(theta0), cfg.dt, nsteps, seed,
                                               cfg.scheme == "refined", cfg.eps_layer, cfg.refine_k,
                                               cfg.max_depth, cfg.theta_cut), cfg.workers)
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts], axis=1)


# ----------------------------------------------------------------------------
# exponent fit


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class LambdaFit:
    lambda_hat: float
    stderr: float
    window: tuple
    r2: float
    n_points: int

    def as_dict(self) -> dict:
        return {"lambda_hat": self.lambda_hat, "stderr": self.stderr, "window": list(self.window),
                "r2": self.r2, "n_points": self.n_points}


def fit_lambda(times, estimates, window=None) -> LambdaFit:
    """Weighted least-squares decay rate of log(mean) against t.

    Weights are (mean / stderr)^2; if any stderr in the window is zero the
    fit is unweighted.  ``window`` defaults to [t_max / 3, t_max].  The
    reported stderr treats the points as independent, which understates
    the spread when the estimates share sample paths.
    """
    t = np.asarray(times, dtype=float)
    m = np.array([e.mean for e in estimates])
    s = np.array([e.stderr for e in estimates])
    if window is None:
        window = (t.max() / 3.0, t.max())
    sel = (t >= window[0] - 1e-12) & (t <= window[1] + 1e-12)
    if sel.sum() < 3:
        raise FitError("need at least 3 time points in the fit window")
    if np.any(m[sel] <= 0):
        raise FitError("nonpositive mean in the fit window; use a shorter horizon or more samples")
    y = np.log(m[sel])
    x = t[sel]
    w = np.ones_like(x) if np.any(s[sel] <= 0) else (m[sel] / s[sel]) ** 2
    A = np.column_stack([np.ones_like(x), x])
    AtW = A.T * w
    cov = np.linalg.inv(AtW @ A)
    beta = cov @ (AtW @ y)
    resid = y - A @ beta
    ybar = np.sum(w * y) / np.sum(w)
    sst = np.sum(w * (y - ybar) ** 2)
    r2 = 1.0 - np.sum(w * resid ** 2) / sst if sst > 0 else 1.0
    se = math.sqrt(cov[1, 1]) if not np.any(s[sel] <= 0) else 0.0
    return LambdaFit(float(-beta[1]), se, (float(window[0]), float(window[1])), float(r2), int(sel.sum()))


# ----------------------------------------------------------------------------
# the Calogero-type operator


@dataclass(frozen=True, eq=False)
class GridFunction:
    theta_grid: np.ndarray
    values: np.ndarray
    spacing: float = field(init=False)

    def __post_init__(self):
        g = np.asarray(self.theta_grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if g.ndim != 1 or g.shape != v.shape:
            raise ValueError("grid and values must be 1-d of equal length")
        if g.size < 5:
            raise ValueError("a grid function needs at least 5 points")
        d = np.diff(g)
        if np.any(d <= 0) or np.ptp(d) > 1e-9 * d.mean():
            raise ValueError("grid must be uniform and increasing")
        if g[0] <= 0 or g[-1] >= TWO_PI:
            raise ValueError("grid must stay inside (0, 2 pi)")
        object.__setattr__(self, "theta_grid", g)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "spacing", float(d.mean()))

    @classmethod
    def sample(cls, func, dtheta: float, theta_min: float = 0.1) -> "GridFunction":
        n = int(round((TWO_PI - 2 * theta_min) / dtheta))
        g = np.linspace(theta_min, TWO_PI - theta_min, n + 1)
        return cls(g, func(g))


def apply_calogero(fn: GridFunction, kappa: float, h: float) -> GridFunction:
    """(kappa/2) F'' + cot(theta/2) F' - h F / (2 sin^2(theta/2)) by central differences.

    The output lives on the interior points of the input grid.
    """
    if not (math.isfinite(kappa) and kappa > 0):
        raise DomainError(f"kappa must be positive, got {kappa}")
    return GridFunction(fn.theta_grid[1:-1], _calogero_stencil(fn.values, fn.theta_grid, fn.spacing, kappa, h))


def _calogero_stencil(F, grid, d, kappa, h):
    th = grid[1:-1]
    d1 = (F[2:] - F[:-2]) / (2 * d)
    d2 = (F[2:] - 2 * F[1:-1] + F[:-2]) / (d * d)
    s = np.sin(0.5 * th)
    return 0.5 * kappa * d2 + np.cos(0.5 * th) / s * d1 - h * F[1:-1] / (2 * s * s)


def eigen_check(kappa: float, h: float, dtheta: float = 1e-3, theta_min: float = 0.1) -> dict:
    """Residual of the operator on F = sin(theta/2)^{delta_+(h)} against eps F."""
    b = exponent_bundle(kappa, h)
    F = GridFunction.sample(lambda t: np.sin(0.5 * t) ** b.delta_plus, dtheta, theta_min)
    HF = apply_calogero(F, kappa, h)
    target = b.eps * F.values[1:-1]
    resid = HF.values - target
    scale = np.maximum(np.abs(target), 1e-300)
    return {
        "kappa": float(kappa),
        "h": float(h),
        "delta_plus": b.delta_plus,
        "eps": b.eps,
        "dtheta": F.spacing,
        "theta_min": float(theta_min),
        "sup_abs_residual": float(np.max(np.abs(resid))),
        "sup_rel_residual": float(np.max(np.abs(resid) / scale)) if b.eps != 0 else float(np.max(np.abs(resid))),
        "positive": bool(np.all(F.values > 0)),
    }


def _calogero_at(func, theta0, kappa, h, d=1e-3):
    g = theta0 + d * np.arange(-1, 2)
    return _calogero_stencil(np.asarray(func(g), dtype=float), g, d, kappa, h)[0]


def generator_consistency(kappa, h, theta0, t, N, seed, phi=np.cos, cfg: SimConfig = SimConfig()) -> dict:
    """Compare E[phi(theta_t) w_t] - phi(theta0) with t (H phi)(theta0).

    The tolerance band is 3 stderr plus t^2/2 |(H^2 phi)(theta0)|, doubled,
    which bounds the second-order term of the small-t expansion.
    """
    if t > 0.1:
        raise ValueError("generator check is meant for t <= 0.1")
    th, w = sample_final(kappa, [h], theta0, t, N, seed, cfg)
    vals = phi(th) * w[0] - phi(theta0)
    lhs = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(N))
    Hphi = float(_calogero_at(phi, theta0, kappa, h))
    HHphi = float(_calogero_at(lambda g: np.array([_calogero_at(phi, x, kappa, h) for x in g]),
                               theta0, kappa, h, d=1e-2))
    rhs = t * Hphi
    band = 3 * se + t * t * abs(HHphi)
    return {"lhs": lhs, "stderr": se, "rhs": rhs, "discrepancy": lhs - rhs, "band": band,
            "ok": abs(lhs - rhs) <= band}
