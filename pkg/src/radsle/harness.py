"""Experiment configuration, dispatch and result files.

An experiment is described by an ``ExperimentConfig``: its name, the
global options (seed, workers, output directory) and experiment options.
Options are validated against a per-experiment table before anything
runs; unknown keys are rejected.  ``run`` returns a ``RunReport`` and,
when an output directory is set, writes CSV tables and ``report.json``
there.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import platform
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import __version__
from . import acceptance
from . import boundary as bo
from . import cft_params as cp
from . import loewner_flow as lf
from . import restriction as rs
from .driving import sample_path, spin_martingale_check
from .rng import check_seed

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid experiment configuration (usage error)."""


# ----------------------------------------------------------------------------
# option tables: name -> (type, default, check or None)


def _pos(x):
    return x > 0


def _nonneg(x):
    return x >= 0


def _count(x):
    return x >= 2


def _angle(x):
    return 0 < x < 2 * math.pi


def _times(x):
    return len(x) > 0 and all(t >= 0 for t in x) and all(b > a for a, b in zip(x, x[1:]))


_FLOAT_LIST = "float_list"
_INT_LIST = "int_list"

OPTIONS = {
    "params": {
        "kappa": (float, 6.0, _pos),
        "h": (float, None, _nonneg),
        "r": (float, None, None),
        "s": (float, None, None),
    },
    "sample-driver": {
        "kappa": (float, 6.0, _pos),
        "t_max": (float, 1.0, _pos),
        "dt": (float, 1e-3, _pos),
        "n": (int, 1, _pos),
    },
    "trace": {
        "kappa": (float, 6.0, _pos),
        "t_max": (float, 1.0, _pos),
        "dt": (float, 1e-3, _pos),
        "n_points": (int, 200, _count),
        "sample_index": (int, 0, _nonneg),
    },
    "flow": {
        "points": (str, None, None),
        "kappa": (float, 6.0, _pos),
        "t_max": (float, 1.0, _pos),
        "dt": (float, 1e-3, _pos),
        "integrator": (str, "rk4_adaptive", lambda v: v in ("rk4_adaptive", "exact")),
        "sample_index": (int, 0, _nonneg),
    },
    "derivative-exponent": {
        "kappa": (float, 6.0, _pos),
        "h": (float, 0.0, _nonneg),
        "theta0": (float, math.pi, _angle),
        "t_max": (float, 6.0, _pos),
        "dt": (float, 1e-3, _pos),
        "t_step": (float, 0.25, _pos),
        "n": (int, 20000, _count),
        "window": (_FLOAT_LIST, None, lambda w: len(w) == 2 and w[1] > w[0]),
        "scheme": (str, "refined", lambda v: v in bo.SCHEMES),
    },
    "eigen-check": {
        "kappa": (float, 6.0, _pos),
        "h": (float, 1.0, _nonneg),
        "grid_dtheta": (float, 1e-3, _pos),
        "theta_min": (float, 0.1, lambda v: 0 < v < math.pi),
    },
    "martingale-check": {
        "kappa": (float, 2.0, _pos),
        "spin": (float, 1.0, None),
        "t_list": (_FLOAT_LIST, [0.5, 1.0, 2.0], lambda x: _times(x) and x[0] > 0),
        "n": (int, 10**5, lambda v: v >= 100),
    },
    "restriction-check": {
        "kappa": (float, 8.0 / 3.0, _pos),
        "a": (float, 1.0, lambda v: v != 0),
        "ell": (float, 0.5, _pos),
        "t_list": (_FLOAT_LIST, [0.25, 0.5, 1.0, 2.0], _times),
        "n": (int, 10**4, _count),
        "dt": (float, 1e-3, _pos),
    },
    "avoidance": {
        "kappa": (float, 8.0 / 3.0, _pos),
        "a": (float, 1.0, lambda v: v != 0),
        "ell": (float, 0.5, _pos),
        "t_max": (float, 8.0, _pos),
        "n": (int, 4000, _count),
        "dt": (float, 1e-3, _pos),
    },
    "acceptance-suite": {
        "only": (_INT_LIST, None, lambda v: all(1 <= x <= 12 for x in v)),
    },
}
EXPERIMENTS = tuple(OPTIONS)
GLOBAL_KEYS = ("experiment", "seed", "workers", "out", "json")


def parse_real(text) -> float:
    """Float from a number or a fraction such as '8/3'."""
    if isinstance(text, str) and "/" in text:
        return float(Fraction(text.strip()))
    return float(text)


def _coerce(kind, value, key):
    try:
        if kind is _FLOAT_LIST:
            if isinstance(value, str):
                value = [v for v in value.replace(",", " ").split() if v]
            return [parse_real(v) for v in value]
        if kind is _INT_LIST:
            if isinstance(value, str):
                value = [v for v in value.replace(",", " ").split() if v]
            return [int(v) for v in value]
        if kind is int:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if kind is float:
            v = parse_real(value)
            if not math.isfinite(v):
                raise ValueError
            return v
        return kind(value)
    except (TypeError, ValueError, ZeroDivisionError):
        raise ConfigError(f"option {key!r}: cannot interpret {value!r} as {getattr(kind, '__name__', kind)}")


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int = 0
    workers: int = 1
    out: str | None = None
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in OPTIONS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
        try:
            self.seed = check_seed(self.seed)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc))
        if not (isinstance(self.workers, int) and self.workers >= 1):
            raise ConfigError("workers must be a positive integer")
        table = OPTIONS[self.experiment]
        unknown = sorted(set(self.options) - set(table))
        if unknown:
            raise ConfigError(f"unknown option(s) for {self.experiment}: {', '.join(unknown)}")
        full = {}
        for key, (kind, default, check) in table.items():
            value = self.options.get(key, default)
            if value is not None:
                value = _coerce(kind, value, key)
                if check is not None and not check(value):
                    raise ConfigError(f"option {key!r} has an invalid value {value!r}")
            full[key] = value
        if self.experiment == "flow" and full["points"] is None:
            raise ConfigError("flow needs a points file")
        if self.experiment == "params" and (full["r"] is None) != (full["s"] is None):
            raise ConfigError("give both r and s or neither")
        self.options = full

    @classmethod
    def from_mapping(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        if "experiment" not in data:
            raise ConfigError("configuration needs an 'experiment' key")
        kw = {k: data.pop(k) for k in ("experiment", "seed", "workers", "out") if k in data}
        data.pop("json", None)
        return cls(options=data, **kw)

    def as_dict(self) -> dict:
        return {"experiment": self.experiment, "seed": self.seed, "workers": self.workers, "out": self.out,
                **self.options}


def load_config_file(path: str) -> dict:
    """Read a JSON object of configuration keys."""
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})")
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    return data


# ----------------------------------------------------------------------------
# reports and files


@dataclass
class Table:
    name: str
    header: list
    rows: list

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(self.header)
        for row in self.rows:
            w.writerow([_cell(v) for v in row])
        return buf.getvalue()


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


@dataclass
class RunReport:
    config: dict
    results: dict
    wall_time: float
    provenance: dict
    tables: list = field(default_factory=list)
    files: list = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION
    version: str = __version__

    def as_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "library_version": self.version,
            "config": self.config,
            "results": _jsonable(self.results),
            "wall_time": self.wall_time,
            "provenance": self.provenance,
            "files": self.files,
        }

    def results_json(self) -> str:
        """Canonical JSON of the numerical results (no timing or paths)."""
        return json.dumps(_jsonable(self.results), sort_keys=True)

    def flat_lines(self) -> list[str]:
        lines = []
        _flatten("", _jsonable(self.results), lines)
        return lines


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def _flatten(prefix, obj, out):
    if isinstance(obj, dict):
        for k, v in obj.items():
            _flatten(f"{prefix}.{k}" if prefix else k, v, out)
    elif isinstance(obj, list) and obj and isinstance(obj[0], (dict, list)):
        for i, v in enumerate(obj):
            _flatten(f"{prefix}.{i}", v, out)
    elif isinstance(obj, list):
        out.append(f"{prefix}=" + ",".join(repr(v) for v in obj))
    else:
        out.append(f"{prefix}={obj!r}" if isinstance(obj, float) else f"{prefix}={obj}")


def write_outputs(report: RunReport, out_dir: str) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for tab in report.tables:
        path = os.path.join(out_dir, f"{tab.name}.csv")
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(tab.to_csv())
        written.append(path)
    report.files = [os.path.basename(p) for p in written] + ["report.json"]
    path = os.path.join(out_dir, "report.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.as_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(path)
    return written


# ----------------------------------------------------------------------------
# experiments: each returns (results, tables, index_range)


def _exp_params(cfg, o):
    k = o["kappa"]
    res = {"sle": cp.sle_parameters(k).as_dict(), "coulomb": cp.coulomb_charges(k).as_dict()}
    if o["h"] is not None:
        res["exponents"] = cp.exponent_bundle(k, o["h"]).as_dict()
    if o["r"] is not None:
        q = cp.coulomb_charges(k)
        res["kac"] = {"r": o["r"], "s": o["s"], "h_rs": cp.weight_rs(k, o["r"], o["s"]),
                      "alpha_rs": q.alpha_rs(o["r"], o["s"])}
    return res, [], None


def _exp_sample_driver(cfg, o):
    rows = []
    for i in range(o["n"]):
        p = sample_path(o["kappa"], o["t_max"], o["dt"], cfg.seed, i)
        rows.extend((i, t, x) for t, x in zip(p.t_grid, p.xi))
    res = {"n_paths": o["n"], "n_steps": int(round(o["t_max"] / o["dt"]))}
    return res, [Table("driver", ["sample_index", "t", "xi"], rows)], [0, o["n"]]


def _exp_trace(cfg, o):
    p = sample_path(o["kappa"], o["t_max"], o["dt"], cfg.seed, o["sample_index"])
    tr = lf.trace(p, n_points=o["n_points"])
    rows = [(t, g.real, g.imag) for t, g in zip(tr.times, tr.gamma)]
    res = {"n_points": len(rows), "tip": [float(tr.gamma[-1].real), float(tr.gamma[-1].imag)]}
    return res, [Table("trace", ["t", "re_gamma", "im_gamma"], rows)], [o["sample_index"], o["sample_index"] + 1]


def read_points(path: str) -> np.ndarray:
    """Points from a CSV with columns ``re,im`` (header optional)."""
    pts = []
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                pts.append(complex(float(row[0]), float(row[1])))
            except (ValueError, IndexError):
                if pts:
                    raise ConfigError(f"{path}: bad row {row!r}")
    if not pts:
        raise ConfigError(f"{path}: no points found")
    return np.array(pts)


def _exp_flow(cfg, o):
    z = read_points(o["points"])
    p = sample_path(o["kappa"], o["t_max"], o["dt"], cfg.seed, o["sample_index"])
    try:
        tr = lf.evolve_points(z, p, lf.FlowConfig(integrator=o["integrator"]))
    except ValueError as exc:
        raise ConfigError(f"flow: {exc}")
    mask = tr.alive_mask()
    rows = []
    for j in range(z.size):
        for k in range(tr.times.size):
            if mask[j, k]:
                g, ld = tr.g[j, k], tr.log_deriv[j, k]
                rows.append((j, tr.times[k], g.real, g.imag, ld.real, ld.imag))
    tau = [None if np.isnan(x) else float(x) for x in tr.tau]
    res = {"n_points": int(z.size), "status": tr.status.tolist(), "tau": tau}
    header = ["point", "t", "re_g", "im_g", "re_log_dg", "im_log_dg"]
    return res, [Table("flow", header, rows)], [o["sample_index"], o["sample_index"] + 1]


def _exp_derivative_exponent(cfg, o):
    n_t = int(round(o["t_max"] / o["t_step"]))
    t = np.round(o["t_step"] * np.arange(1, n_t + 1), 12)
    sim = bo.SimConfig(dt=o["dt"], scheme=o["scheme"], workers=cfg.workers)
    try:
        est = bo.estimate_f_h(o["kappa"], o["h"], o["theta0"], t, o["n"], cfg.seed, sim)
    except ValueError as exc:
        raise ConfigError(str(exc))
    res = {"estimates": [e.as_dict() for e in est], "lambda_theory": cp.decay_exponent(o["kappa"], o["h"])}
    try:
        fit = bo.fit_lambda(t, est, o["window"])
        res.update(fit.as_dict())
    except bo.FitError as exc:
        res["fit_error"] = str(exc)
    rows = [(ti, e.mean, e.stderr) for ti, e in zip(t, est)]
    return res, [Table("f_h", ["t", "mean", "stderr"], rows)], [0, o["n"]]


def _exp_eigen_check(cfg, o):
    res = bo.eigen_check(o["kappa"], o["h"], o["grid_dtheta"], o["theta_min"])
    return res, [], None


def _exp_martingale_check(cfg, o):
    out = spin_martingale_check(o["kappa"], o["spin"], o["t_list"], o["n"], cfg.seed, cfg.workers)
    times = sorted(o["t_list"])
    rows, worst = [], 0.0
    for t, (re, im) in zip(times, out):
        rows.append((t, re.mean, re.stderr, im.mean, im.stderr))
        worst = max(worst, math.hypot(re.mean - 1, im.mean) / math.hypot(re.stderr, im.stderr))
    res = {"max_dev_over_stderr": worst, "flat": worst <= 3.0}
    return res, [Table("spin_martingale", ["t", "mean_re", "stderr_re", "mean_im", "stderr_im"], rows)], [0, o["n"]]


def _exp_restriction_check(cfg, o):
    hull = rs.SlitHull(o["a"], o["ell"])
    r = rs.restriction_check(hull, o["kappa"], o["t_list"], o["n"], cfg.seed,
                             rs.RestrictionConfig(dt=o["dt"], workers=cfg.workers))
    rows = [(t, e.mean, e.stderr, int(a)) for t, e, a in zip(r.times, r.estimates, r.n_alive)]
    res = {"M0": r.M0, "pairwise_ok": r.pairwise_ok(3.0), "estimates": [e.as_dict() for e in r.estimates]}
    return res, [Table("restriction", ["t", "mean_M", "stderr", "n_alive"], rows)], [0, o["n"]]


def _exp_avoidance(cfg, o):
    r = rs.avoidance_probability(rs.SlitHull(o["a"], o["ell"]), o["kappa"], o["t_max"], o["n"], cfg.seed,
                                 rs.RestrictionConfig(dt=o["dt"], workers=cfg.workers))
    return r, [], [0, o["n"]]


def _exp_acceptance(cfg, o, progress=None):
    results = acceptance.run_suite(o["only"], workers=cfg.workers, seed=cfg.seed, progress=progress)
    gates = [r for r in results if r.gate]
    res = {"criteria": [r.as_dict() for r in results], "all_gates_passed": all(r.passed for r in gates)}
    rows = [(r.number, r.title, "pass" if r.passed else "fail", r.gate, round(r.runtime, 3)) for r in results]
    return res, [Table("acceptance", ["criterion", "title", "status", "gate", "seconds"], rows)], None


_RUNNERS = {
    "params": _exp_params,
    "sample-driver": _exp_sample_driver,
    "trace": _exp_trace,
    "flow": _exp_flow,
    "derivative-exponent": _exp_derivative_exponent,
    "eigen-check": _exp_eigen_check,
    "martingale-check": _exp_martingale_check,
    "restriction-check": _exp_restriction_check,
    "avoidance": _exp_avoidance,
    "acceptance-suite": _exp_acceptance,
}


def run(config: ExperimentConfig, progress=None) -> RunReport:
    """Run one experiment; write files if ``config.out`` is set."""
    t0 = time.perf_counter()
    runner = _RUNNERS[config.experiment]
    if config.experiment == "acceptance-suite":
        results, tables, index_range = runner(config, config.options, progress)
    else:
        results, tables, index_range = runner(config, config.options)
    wall = time.perf_counter() - t0
    prov = {"seed": config.seed, "index_range": index_range, "generator": "philox4x32-10",
            "python": platform.python_version(), "numpy": np.__version__}
    report = RunReport(config.as_dict(), results, wall, prov, tables)
    if config.out:
        write_outputs(report, config.out)
    return report
