import csv
import json
import math

import pytest

from radsle import cli
from radsle.harness import SCHEMA_VERSION, ConfigError, ExperimentConfig, parse_real, run


def test_params_report_contains_central_charge(capsys):
    assert cli.main(["params", "--kappa", "6"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert "sle.c=0.0" in out
    assert cli.main(["params", "--kappa", "8/3", "--h", "1", "--json"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["schema_version"] == SCHEMA_VERSION
    assert rep["results"]["sle"]["h12"] == pytest.approx(5 / 8)


def test_kac_weight_in_params():
    rep = run(ExperimentConfig("params", options={"kappa": 6.0, "r": 1, "s": 2}))
    assert rep.results["kac"]["h_rs"] == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(ConfigError):
        ExperimentConfig("params", options={"kappa": 6.0, "r": 1})


def test_unknown_and_invalid_options_rejected(tmp_path, capsys):
    with pytest.raises(ConfigError):
        ExperimentConfig("params", options={"kapa": 6.0})
    with pytest.raises(ConfigError):
        ExperimentConfig("derivative-exponent", options={"kappa": -1.0})
    with pytest.raises(ConfigError):
        ExperimentConfig("nonsense")
    with pytest.raises(ConfigError):
        ExperimentConfig("params", workers=0)
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"kappa": 6, "extra_key": 1}))
    with pytest.raises(SystemExit) as exc:
        cli.main(["params", "--config", str(cfg)])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        cli.main(["params", "--kappa", "abc"])
    assert exc.value.code == 2


def test_config_file_with_flag_override(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"kappa": 6, "h": 0.5, "seed": 4}))
    assert cli.main(["params", "--config", str(cfg), "--h", "1", "--json"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["config"]["h"] == 1.0 and rep["config"]["seed"] == 4
    assert rep["results"]["exponents"]["lambda"] == pytest.approx(1.25)


def test_sample_driver_csv(tmp_path, capsys):
    out = tmp_path / "o"
    assert cli.main(["sample-driver", "--kappa", "6", "--t-max", "0.01", "--dt", "1e-3", "--n", "3",
                     "--seed", "7", "--out", str(out)]) == 0
    with open(out / "driver.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["sample_index", "t", "xi"]
    assert len(rows) == 1 + 3 * 11
    assert float(rows[1][2]) == 0.0
    rep = json.loads((out / "report.json").read_text())
    assert rep["provenance"]["index_range"] == [0, 3]
    assert rep["files"] == ["driver.csv", "report.json"]


def test_trace_and_flow(tmp_path, capsys):
    out = tmp_path / "o"
    assert cli.main(["trace", "--t-max", "0.1", "--n-points", "5", "--seed", "1", "--out", str(out)]) == 0
    with open(out / "trace.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "re_gamma", "im_gamma"] and len(rows) == 6
    pts = tmp_path / "pts.csv"
    pts.write_text("re,im\n2,0\n0,1.5\n")
    assert cli.main(["flow", "--points", str(pts), "--t-max", "0.05", "--out", str(out)]) == 0
    with open(out / "flow.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][:2] == ["point", "t"] and len(rows) == 1 + 2 * 51
    bad = tmp_path / "bad.csv"
    bad.write_text("0.5,0\n")
    with pytest.raises(SystemExit) as exc:
        cli.main(["flow", "--points", str(bad)])
    assert exc.value.code == 2


def test_derivative_exponent_and_eigen_check(tmp_path, capsys):
    out = tmp_path / "o"
    assert cli.main(["derivative-exponent", "--kappa", "6", "--h", "0", "--theta0", "3.14159", "--t-max", "1",
                     "--dt", "1e-3", "--n", "200", "--seed", "3", "--out", str(out)]) == 0
    with open(out / "f_h.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "mean", "stderr"] and len(rows) == 5
    rep = json.loads((out / "report.json").read_text())
    assert {"lambda_hat", "stderr", "window"} <= set(rep["results"])
    assert cli.main(["eigen-check", "--kappa", "6", "--h", "1", "--grid-dtheta", "1e-3", "--json"]) == 0
    capsys.readouterr()


def test_martingale_restriction_avoidance(tmp_path, capsys):
    out = tmp_path / "o"
    assert cli.main(["martingale-check", "--n", "2000", "--out", str(out)]) == 0
    assert cli.main(["restriction-check", "--t-list", "0.25", "0.5", "--n", "20", "--seed", "2",
                     "--out", str(out)]) == 0
    with open(out / "restriction.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "mean_M", "stderr", "n_alive"] and len(rows) == 3
    capsys.readouterr()
    assert cli.main(["avoidance", "--a", "50", "--ell", "0.5", "--n", "20", "--t-max", "0.5", "--json"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert {"freq", "stderr", "candidate"} <= set(rep["results"])


def test_results_independent_of_workers():
    base = {"kappa": 6.0, "h": 1.0, "t_max": 0.5, "n": 5000, "t_step": 0.25}
    a = run(ExperimentConfig("derivative-exponent", seed=9, workers=1, options=dict(base)))
    b = run(ExperimentConfig("derivative-exponent", seed=9, workers=3, options=dict(base)))
    assert a.results_json() == b.results_json()


def test_acceptance_suite_subset(capsys):
    assert cli.main(["acceptance-suite", "--only", "1", "5"]) == 0
    out = capsys.readouterr().out
    assert "[PASS] criterion 1" in out and "[PASS] criterion 5" in out


def test_parse_real():
    assert parse_real("8/3") == pytest.approx(8 / 3)
    assert parse_real("1e-3") == 1e-3
    assert math.isclose(parse_real(2), 2.0)
