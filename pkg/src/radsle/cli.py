"""Command-line entry point: ``radsle <experiment> [options]``.

Options may also come from a JSON file given with ``--config``; flags on
the command line override file values.  Without ``--out`` nothing is
written to disk and the results are printed as ``key=value`` lines (or
as the JSON report with ``--json``).  With ``--out DIR`` the CSV tables
and ``report.json`` are written to DIR.

Exit status: 0 on success, 2 for usage errors, 1 for numerical failures
and 3 when the acceptance suite has a failing gate.
"""
from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from .cft_params import DomainError
from .harness import EXPERIMENTS, OPTIONS, ConfigError, ExperimentConfig, load_config_file, parse_real, run

HELP = {
    "params": "closed-form weights, charges and exponents",
    "sample-driver": "driver samples as CSV sample_index,t,xi",
    "trace": "one trace as CSV t,re_gamma,im_gamma",
    "flow": "trajectories of the points in a CSV file under one driver",
    "derivative-exponent": "Monte Carlo f_h(theta0, t) and the fitted decay rate",
    "eigen-check": "finite-difference residual of the boundary operator eigenfunction",
    "martingale-check": "flatness of the spin martingale exp(i s xi_t + kappa s^2 t / 2)",
    "restriction-check": "Monte Carlo means of the restriction martingale for a slit hull",
    "avoidance": "frequency of avoiding a slit hull against the closed-form candidate",
    "acceptance-suite": "run the acceptance criteria and report pass/fail",
}

_FLAG_HELP = {
    "points": "CSV file with columns re,im (exterior-disc points, |z| >= 1)",
    "t_list": "times (multiples of dt where relevant)",
    "only": "criterion numbers to run (default: all)",
    "window": "fit window t_lo t_hi (default: [t_max/3, t_max])",
    "spin": "spin s of the martingale",
}


def _real(text):
    try:
        return parse_real(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")


def _global_parser() -> argparse.ArgumentParser:
    g = argparse.ArgumentParser(add_help=False)
    g.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed (default 0)")
    g.add_argument("--workers", type=int, default=argparse.SUPPRESS, help="worker processes (default 1)")
    g.add_argument("--out", metavar="DIR", default=argparse.SUPPRESS, help="write CSV and report.json here")
    g.add_argument("--json", action="store_true", default=argparse.SUPPRESS, help="print the JSON report")
    g.add_argument("--config", metavar="FILE", default=argparse.SUPPRESS, help="JSON file of options")
    return g


def build_parser() -> argparse.ArgumentParser:
    common = _global_parser()
    p = argparse.ArgumentParser(prog="radsle", description="Radial SLE simulations and numerical checks.",
                                parents=[common])
    p.add_argument("--version", action="version", version=f"radsle {__version__}")
    sub = p.add_subparsers(dest="experiment", metavar="experiment")
    sub.required = True
    for name in EXPERIMENTS:
        sp = sub.add_parser(name, help=HELP[name], description=HELP[name], parents=[common])
        for key, (kind, default, _) in OPTIONS[name].items():
            flag = "--" + key.replace("_", "-")
            hint = _FLAG_HELP.get(key, "")
            shown = f" (default {default})" if default is not None else ""
            if kind in ("float_list", "int_list"):
                conv = _real if kind == "float_list" else int
                sp.add_argument(flag, dest=key, type=conv, nargs="+", default=argparse.SUPPRESS,
                                help=hint + shown)
            else:
                conv = _real if kind is float else kind
                sp.add_argument(flag, dest=key, type=conv, default=argparse.SUPPRESS, help=hint + shown)
    return p


def _collect(ns: argparse.Namespace) -> tuple[ExperimentConfig, bool]:
    given = vars(ns).copy()
    experiment = given.pop("experiment")
    as_json = bool(given.pop("json", False))
    data = {}
    if "config" in given:
        data = load_config_file(given.pop("config"))
        if data.get("experiment", experiment) != experiment:
            raise ConfigError(f"config file is for {data['experiment']!r}, not {experiment!r}")
        as_json = as_json or bool(data.pop("json", False))
    data.update(given)
    data["experiment"] = experiment
    return ExperimentConfig.from_mapping(data), as_json


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        cfg, as_json = _collect(ns)
    except (ConfigError, OSError) as exc:
        parser.exit(2, f"radsle: error: {exc}\n")

    progress = None
    if cfg.experiment == "acceptance-suite" and not as_json:
        def progress(res):
            print(res.line(), flush=True)
    try:
        report = run(cfg, progress)
    except ConfigError as exc:
        parser.exit(2, f"radsle: error: {exc}\n")
    except (DomainError, ValueError, ArithmeticError) as exc:
        print(f"radsle: {cfg.experiment} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1

    if as_json:
        print(json.dumps(report.as_dict(), indent=2, sort_keys=True))
    elif cfg.experiment != "acceptance-suite":
        for line in report.flat_lines():
            print(line)
    if cfg.out and not as_json:
        print(f"wrote {', '.join(report.files)} to {cfg.out}")
    if cfg.experiment == "acceptance-suite" and not report.results["all_gates_passed"]:
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
