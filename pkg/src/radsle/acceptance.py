"""Acceptance criteria as runnable checks.

Each ``criterion_N`` runs one check at its full size and returns a
``CriterionResult``.  ``run_suite`` runs a selection in order.  Criterion
12 is a stretch target: it is reported with ``passed`` set but is not a
gate (``gate=False``).
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import boundary as bo
from . import cft_params as cp
from . import loewner_flow as lf
from . import restriction as rs
from .driving import deterministic_path, sample_path, spin_martingale_check

SEED = 20261015


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    values: dict = field(default_factory=dict)
    gate: bool = True
    runtime: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        if not self.gate:
            status = "REPORT(" + status.lower() + ")"
        brief = ", ".join(f"{k}={_fmt(v)}" for k, v in self.values.items() if not isinstance(v, (list, dict)))
        return f"[{status}] criterion {self.number}: {self.title} ({brief}; {self.runtime:.1f} s)"

    def as_dict(self) -> dict:
        return {"number": self.number, "title": self.title, "passed": bool(self.passed), "gate": self.gate,
                "values": self.values, "runtime": self.runtime}


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _timed(number, title, gate=True):
    def deco(fn):
        def wrapper(*args, **kwargs):
            t0 = time.perf_counter()
            passed, values = fn(*args, **kwargs)
            return CriterionResult(number, title, bool(passed), values, gate, time.perf_counter() - t0)
        wrapper.__name__ = fn.__name__
        wrapper.__doc__ = fn.__doc__
        return wrapper
    return deco


@_timed(1, "exact parameter identities")
def criterion_1():
    tol = 1e-10
    checks = {
        "c(6)": (cp.central_charge(6.0), 0.0),
        "c(8/3)": (cp.central_charge(8.0 / 3.0), 0.0),
        "c(2)": (cp.central_charge(2.0), -2.0),
        "h12(8/3)": (cp.sle_parameters(8.0 / 3.0).h12, 5.0 / 8.0),
        "2h0(8/3)": (cp.sle_parameters(8.0 / 3.0).h0half2, 5.0 / 48.0),
        "d+(6,1)": (cp.delta_pm(6.0, 1.0)[0], 1.0),
        "d-(6,1)": (cp.delta_pm(6.0, 1.0)[1], -2.0 / 3.0),
        "lambda(6,0)": (cp.decay_exponent(6.0, 0.0), 0.25),
        "lambda(6,1)": (cp.decay_exponent(6.0, 1.0), 1.25),
    }
    errs = {k: abs(a - b) for k, (a, b) in checks.items()}
    kac = 0.0
    for kappa in (0.5, 1.0, 2.0, 8.0 / 3.0, 3.0, 4.0, 6.0, 8.0, 12.0):
        q = cp.coulomb_charges(kappa)
        for r in range(1, 5):
            for s in range(1, 5):
                kac = max(kac, abs(cp.weight_rs(kappa, r, s) - q.weight_of_charge(q.alpha_rs(r, s))))
    worst = max(max(errs.values()), kac)
    return worst <= tol, {"max_error": worst, "kac_coulomb_error": kac}


@_timed(2, "spin martingale flatness")
def criterion_2(N=10**5, seed=SEED, workers=1):
    t_list = [0.5, 1.0, 2.0]
    res = spin_martingale_check(2.0, 1.0, t_list, N, seed, workers)
    ratios = []
    for re, im in res:
        dev = math.hypot(re.mean - 1.0, im.mean)
        ratios.append(dev / math.hypot(re.stderr, im.stderr))
    return max(ratios) <= 3.0, {"max_dev_over_stderr": max(ratios), "N": N}


_EXPONENT_CACHE: dict = {}


def exponent_run(N=2 * 10**5, seed=SEED, workers=1, dt=1e-3):
    """Shared kappa = 6 run for h = 0 and h = 1 (criteria 3 and 4)."""
    key = (N, seed, dt)
    if key not in _EXPONENT_CACHE:
        t = np.round(np.arange(0.25, 6.0 + 1e-9, 0.25), 10)
        t0 = time.perf_counter()
        est = bo.estimate_f_h_multi(6.0, [0.0, 1.0], math.pi, t, N, seed, bo.SimConfig(dt=dt, workers=workers))
        fits = [bo.fit_lambda(t, e, window=(2.0, 6.0)) for e in est]
        _EXPONENT_CACHE[key] = (t, est, fits, time.perf_counter() - t0)
    return _EXPONENT_CACHE[key]


@_timed(3, "derivative exponent kappa=6, h=0")
def criterion_3(N=2 * 10**5, seed=SEED, workers=1):
    _, _, fits, wall = exponent_run(N, seed, workers)
    f = fits[0]
    return abs(f.lambda_hat - 0.25) <= 0.02, {"lambda_hat": f.lambda_hat, "stderr": f.stderr, "target": 0.25,
                                               "shared_run_seconds": wall}


@_timed(4, "derivative exponent kappa=6, h=1")
def criterion_4(N=2 * 10**5, seed=SEED, workers=1):
    _, _, fits, wall = exponent_run(N, seed, workers)
    f = fits[1]
    return abs(f.lambda_hat - 1.25) <= 0.07, {"lambda_hat": f.lambda_hat, "stderr": f.stderr, "target": 1.25,
                                               "shared_run_seconds": wall}


@_timed(5, "Calogero eigenfunction residual")
def criterion_5():
    r = bo.eigen_check(6.0, 1.0, dtheta=1e-3, theta_min=0.1)
    ok = r["sup_rel_residual"] <= 1e-4 and abs(r["eps"] + 1.25) <= 1e-12 and abs(r["delta_plus"] - 1) <= 1e-12
    return ok, {"sup_rel_residual": r["sup_rel_residual"], "eps": r["eps"]}


@_timed(6, "pathwise equivalence of the angle process and the complex flow")
def criterion_6(n_paths=100, t_max=2.0, seed=SEED):
    worst = 0.0
    for i in range(n_paths):
        path = sample_path(6.0, t_max, 1e-3, seed, i)
        theta0 = 0.5 + 5.0 * (i + 0.5) / n_paths
        ap = bo.theta_path(path, theta0, h=0.0)
        tr = lf.evolve_point(np.exp(1j * theta0), path)
        held = np.concatenate([[path.xi[0]], path.xi[:-1]])
        ang = np.mod(np.angle(tr.g[0] * np.exp(-1j * held)), 2 * np.pi)
        ok = ap.alive & (np.sin(0.5 * np.nan_to_num(ap.theta)) >= 0.01)
        stop = int(np.argmin(ok)) if not ok.all() else ok.size
        d = np.abs(ap.theta[:stop] - ang[:stop])
        worst = max(worst, float(np.minimum(d, 2 * np.pi - d).max()))
    return worst <= 1e-4, {"sup_dtheta": worst, "paths": n_paths}


@_timed(7, "Feynman-Kac weight against the variational equation")
def criterion_7(n_paths=100, t_max=2.0, seed=SEED):
    worst = 0.0
    for i in range(n_paths):
        path = sample_path(6.0, t_max, 1e-3, seed + 1, i)
        theta0 = 0.5 + 5.0 * (i + 0.5) / n_paths
        ap = bo.theta_path(path, theta0, h=1.0)
        tr = lf.evolve_point(np.exp(1j * theta0), path)
        n = int(np.argmin(ap.alive)) if not ap.alive.all() else ap.alive.size
        n = min(n, int(tr.alive_mask()[0].sum()))
        log_g = tr.log_deriv[0, :n].real
        rel = np.abs(np.expm1(ap.fk_log_weight[:n] - log_g))
        worst = max(worst, float(rel.max()))
    return worst <= 1e-3, {"max_rel_diff": worst, "paths": n_paths}


@_timed(8, "capacity normalization")
def criterion_8(seed=SEED):
    worst = 0.0
    z = 1e4 * np.exp(2j * np.pi * (np.arange(16) + 0.5) / 16)
    for i in range(4):
        path = sample_path(6.0, 5.0, 1e-3, seed, i)
        tr = lf.evolve_points(z, path)
        worst = max(worst, float(np.abs(tr.g / z[:, None] - np.exp(-tr.times)[None, :]).max()))
    return worst <= 1e-3, {"max_dev": worst}


@_timed(9, "zero-driver first integral")
def criterion_9(seed=SEED):
    r = np.random.default_rng(seed)
    z = (1.05 + 3 * r.random(100)) * np.exp(2j * np.pi * r.random(100))
    path = deterministic_path("zero", 2.0, 1e-3)
    worst = 0.0
    for cfg in (lf.FlowConfig(), lf.FlowConfig(integrator="exact")):
        tr = lf.evolve_points(z, path, cfg)
        inv = np.exp(tr.times) * (tr.g + 1) ** 2 / tr.g
        worst = max(worst, float((np.abs(inv - inv[:, :1]) / np.abs(inv[:, :1])).max()))
    return worst <= 1e-6, {"max_rel_drift": worst}


@_timed(10, "half-plane conjugation residual")
def criterion_10(n_paths=10, seed=SEED):
    pts = np.array([0.5 + 1j, -1 + 0.3j, 2j, 0.1 + 0.2j, -0.4 + 2.5j, 1.5 + 0.5j, -2 + 1j, 0.05j + 0.3])
    worst = 0.0
    used = 0
    i = 0
    while used < n_paths and i < 10 * n_paths:
        path = sample_path(6.0, 0.5, 1e-3, seed, i)
        i += 1
        try:
            worst = max(worst, float(lf.half_plane_residual(pts, path).max()))
        except lf.WindowSkipped:
            continue
        used += 1
    return used == n_paths and worst <= 1e-6, {"max_residual_per_time": worst, "paths": used}


@_timed(11, "restriction martingale flatness")
def criterion_11(N=10**4, seed=SEED, workers=1, n_diagram=20):
    hull = rs.SlitHull(1.0, 0.5)
    t_list = [0.25, 0.5, 1.0, 2.0]
    res = rs.restriction_check(hull, 8.0 / 3.0, t_list, N, seed, rs.RestrictionConfig(workers=workers))
    worst_pair = 0.0
    e = res.estimates
    for a in range(len(e)):
        for b in range(a + 1, len(e)):
            worst_pair = max(worst_pair, abs(e[a].mean - e[b].mean) / math.hypot(e[a].stderr, e[b].stderr))
    diag = 0.0
    for i in range(n_diagram):
        tr = rs.evolve_transported(hull, sample_path(8.0 / 3.0, 2.0, 1e-3, seed, i))
        diag = max(diag, tr.max_residual)
    ok = worst_pair <= 3.0 and diag <= 1e-3
    return ok, {"max_pair_dev_over_stderr": worst_pair, "max_diagram_residual": diag, "M0": res.M0,
                "means": [x.mean for x in e], "stderrs": [x.stderr for x in e], "n_alive": res.n_alive.tolist()}


@_timed(12, "avoidance probability against the candidate (stretch)", gate=False)
def criterion_12(N=4000, seed=SEED, workers=1, t_max=8.0):
    r = rs.avoidance_probability(rs.SlitHull(1.0, 0.5), 8.0 / 3.0, t_max, N, seed,
                                 rs.RestrictionConfig(workers=workers))
    allowance = r["unresolved"]
    disc = r["freq"] - r["candidate"]
    ok = abs(disc) <= 3 * r["stderr"] + allowance
    return ok, {"freq": r["freq"], "stderr": r["stderr"], "candidate": r["candidate"], "discrepancy": disc,
                "truncation_allowance": allowance}


CRITERIA = {n: globals()[f"criterion_{n}"] for n in range(1, 13)}
_MC = {2, 3, 4, 11, 12}


def run_suite(only=None, workers=1, seed=SEED, progress=None) -> list[CriterionResult]:
    out = []
    for n in (sorted(only) if only else sorted(CRITERIA)):
        fn = CRITERIA[n]
        res = fn(seed=seed, workers=workers) if n in _MC else (fn(seed=seed) if n not in (1, 5) else fn())
        out.append(res)
        if progress is not None:
            progress(res)
    return out
