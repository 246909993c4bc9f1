import csv
import io
import json
import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from itr_eval.cli import (
    EvaluationReport,
    ParseError,
    cmd_crossfit,
    cmd_evaluate,
    cmd_simulate,
    config_hash,
    main,
    read_dataset,
    validate_config,
)
from itr_eval.errors import ConfigError

FOUR = "outcome,treatment,assign\n1,1,1\n2,1,0\n3,0,0\n4,0,1\n"


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def _run(capsys, argv):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_four_unit_pape(tmp_path, capsys):
    path = _write(tmp_path, "d.csv", FOUR)
    code, out, _ = _run(capsys, ["evaluate", "--data", path, "--rule", "column:assign"])
    assert code == 0
    est = json.loads(out)["estimates"]
    assert est["PAPE"]["value"] == pytest.approx(-2 / 3, abs=1e-12)
    # treated with f=1: y=1 over n1=2; control with f=0: y=3 over n0=2
    assert est["PAV"]["value"] == pytest.approx(0.5 + 1.5, abs=1e-12)
    assert est["ATE"]["value"] == pytest.approx(1.5 - 3.5, abs=1e-12)


def test_constant_rule_degenerate(tmp_path, capsys):
    path = _write(tmp_path, "d.csv", FOUR)
    code, out, _ = _run(capsys, ["evaluate", "--data", path, "--rule", "constant-1"])
    rep = json.loads(out)
    assert code == 0
    assert rep["estimates"]["PAPE"]["value"] == 0.0
    assert "DEGENERATE_RULE" in rep["estimates"]["PAPE"]["flags"]
    assert any("DEGENERATE_RULE" in w for w in rep["warnings"])


def test_missing_treatment_column(tmp_path, capsys):
    path = _write(tmp_path, "d.csv", "outcome,arm\n1,1\n2,0\n")
    code, _, err = _run(capsys, ["evaluate", "--data", path, "--rule", "constant-1"])
    assert code == 2
    assert "treatment" in err


def test_non_numeric_cell_reports_line(tmp_path):
    path = _write(tmp_path, "d.csv", "outcome,treatment\n1,1\nabc,0\n3,0\n4,1\n")
    with pytest.raises(ParseError) as exc:
        read_dataset(path)
    assert exc.value.line == 3 and exc.value.column == "outcome"


def test_two_rules(tmp_path, capsys):
    path = _write(tmp_path, "d.csv", FOUR)
    code, out, _ = _run(capsys, ["evaluate", "--data", path, "--rule", "column:assign", "--rule2", "constant-0"])
    est = json.loads(out)["estimates"]
    assert code == 0
    assert est["PAV_DIFF"]["value"] == pytest.approx(est["PAV"]["value"] - est["PAV_rule2"]["value"], abs=1e-12)


def test_shift_adds_diagnostics(tmp_path):
    rng = np.random.default_rng(0)
    rows = ["outcome,treatment,x1"] + [f"{rng.normal():.6f},{i % 2},{rng.normal():.6f}" for i in range(40)]
    path = _write(tmp_path, "d.csv", "\n".join(rows) + "\n")
    base = cmd_evaluate(path, "threshold:x1:0", shift=0.0).extra["shift_diagnostics"]
    rep = cmd_evaluate(path, "threshold:x1:0", shift=5.0)
    moved = rep.extra["shift_diagnostics"]
    # the optimal shift is defined relative to the outcomes it is applied to
    assert moved["delta_star_pav"] == pytest.approx(base["delta_star_pav"] - 5.0, abs=1e-9)
    assert rep.notes and not cmd_evaluate(path, "threshold:x1:0").extra


def test_crossfit_constant_rule_pooled_treated_mean(tmp_path, capsys):
    rng = np.random.default_rng(1)
    y = rng.normal(size=20).round(4)
    rows = ["outcome,treatment"] + [f"{v},{i % 2}" for i, v in enumerate(y)]
    path = _write(tmp_path, "d.csv", "\n".join(rows) + "\n")
    code, out, _ = _run(capsys, ["crossfit", "--data", path, "--algo", "constant-1", "--k", "2", "--seed", "3"])
    assert code == 0
    pav = json.loads(out)["estimates"]["PAV_CROSSFIT"]["value"]
    assert pav == pytest.approx(y[1::2].mean(), abs=1e-12)


def test_crossfit_indivisible_suggests_k(tmp_path, capsys):
    rows = ["outcome,treatment"] + [f"{i},{int(i < 3)}" for i in range(9)]
    path = _write(tmp_path, "d.csv", "\n".join(rows) + "\n")
    code, _, err = _run(capsys, ["crossfit", "--data", path, "--algo", "constant-1", "--k", "2"])
    assert code == 2
    assert "--k 3" in err


def test_all_clipped_exit_code(tmp_path, capsys):
    # fold means of the treated differ far more than within-fold spread
    text = "outcome,treatment,x1\n0,1,0\n0.1,1,0\n10,1,0\n10.1,1,0\n1,0,0\n1,0,0\n1.2,0,0\n1.1,0,0\n"
    path = _write(tmp_path, "d.csv", text)
    code, out, _ = _run(capsys, ["crossfit", "--data", path, "--algo", "constant-1", "--k", "2", "--seed", "5"])
    assert code == 3
    assert "CLIPPED" in json.loads(out)["estimates"]["PAV_CROSSFIT"]["flags"]


def test_reports_byte_identical(tmp_path):
    path = _write(tmp_path, "d.csv", "outcome,treatment,x1\n" + "".join(f"{i * 0.37 % 3:.3f},{i % 2},{(i * 7) % 5}\n" for i in range(24)))
    a = cmd_crossfit(path, "stratum:x1:2", 4, seed=11).to_json()
    b = cmd_crossfit(path, "stratum:x1:2", 4, seed=11).to_json()
    assert a == b
    c = cmd_evaluate(path, "threshold:x1:2").to_json()
    assert c == cmd_evaluate(path, "threshold:x1:2").to_json()
    assert "timestamp" not in json.loads(c)["metadata"]
    assert "timestamp" in json.loads(cmd_evaluate(path, "threshold:x1:2", timestamp=True).to_json())["metadata"]


def test_report_round_trip(tmp_path):
    path = _write(tmp_path, "d.csv", FOUR)
    rep = cmd_evaluate(path, "column:assign", rule2="constant-1")
    text = rep.to_json()
    assert EvaluationReport.from_json(text).to_json() == text


def test_config_hash_stable():
    assert config_hash({"b": 1, "a": [1.0, 2]}) == config_hash({"a": [1.0, 2], "b": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})


@settings(max_examples=40)
@given(st.lists(st.floats(-1e12, 1e12, allow_nan=False), min_size=4, max_size=12))
def test_csv_ingestion_lossless(values):
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["outcome", "treatment", "z"])
    for i, v in enumerate(values):
        w.writerow([f"{v:.15g}", i % 2, repr(v)])
    buf.seek(0)
    d = read_dataset(buf)
    for got, v in zip(d.outcome, values):
        assert f"{got:.15g}" == f"{v:.15g}"
    np.testing.assert_array_equal(d.covariates[:, 0], values)


# --- simulate


def test_simulate_zero_replications(tmp_path, capsys):
    cfg = _write(tmp_path, "c.toml", 'scenario = "shift_curve"\nreplications = 0\npopulation_size = 1000\n')
    out_dir = str(tmp_path / "out")
    code, _, _ = _run(capsys, ["simulate", "--config", cfg, "--out-dir", out_dir])
    assert code == 0
    lines = open(os.path.join(out_dir, "shift_curve.csv")).read().splitlines()
    assert len(lines) == 1 and lines[0].startswith("delta,")
    summary = json.load(open(os.path.join(out_dir, "summary.json")))
    assert summary["extra"]["summary"] is None


def test_simulate_shift_curve_minimum(tmp_path):
    cfg = _write(
        tmp_path, "c.json",
        json.dumps({"scenario": "shift_curve", "replications": 4000, "population_size": 20000, "seed": 2, "n": [100]}),
    )
    rep, path = cmd_simulate(cfg, str(tmp_path / "o"))
    rows = list(csv.DictReader(open(path)))
    deltas = [float(r["delta"]) for r in rows]
    pen = [float(r["var_penalty_theory"]) for r in rows]
    assert float(rows[int(np.argmin(pen))]["delta"]) == min(deltas, key=abs)
    assert rep.extra["summary"]["minimum_at_delta_star"]


def test_simulate_ex_ante_ordering(tmp_path):
    cfg = _write(
        tmp_path, "c.toml",
        'scenario = "ex_ante_vs_ex_post"\nreplications = 3000\npopulation_size = 20000\nn = [100, 200]\n',
    )
    rep, path = cmd_simulate(cfg, str(tmp_path / "o"))
    rows = list(csv.DictReader(open(path)))
    assert len(rows) == 2
    assert all(float(r["se_ex_ante"]) > float(r["se_ex_post"]) for r in rows)
    assert rep.extra["summary"]["ordering_holds"]


@pytest.mark.parametrize(
    "body,field",
    [
        ('scenario = "nope"\n', "config.scenario"),
        ('scenario = "ex_ante_vs_ex_post"\nn = [100, 202]\n', "config.n[1]"),
        ('scenario = "shift_curve"\nreplications = -1\n', "config.replications"),
        ('scenario = "shift_curve"\ncolour = 1\n', "config.colour"),
        ('scenario = "crossfit_validation"\nn = [40]\nk = [3]\n', "config.k[0]"),
        ('scenario = "shift_curve"\nbackend = "gpu"\n', "config.backend"),
    ],
)
def test_config_errors(tmp_path, capsys, body, field):
    cfg = _write(tmp_path, "c.toml", body)
    code, _, err = _run(capsys, ["simulate", "--config", cfg, "--out-dir", str(tmp_path / "o")])
    assert code == 4
    assert field in err


def test_config_parse_error(tmp_path, capsys):
    cfg = _write(tmp_path, "c.toml", "scenario = \n")
    code, _, _ = _run(capsys, ["simulate", "--config", cfg, "--out-dir", str(tmp_path)])
    assert code == 4


def test_validate_config_defaults():
    cfg = validate_config({"scenario": "variance_fidelity"})
    assert cfg["n"] == [200] and cfg["replications"] == 10_000
    with pytest.raises(ConfigError):
        validate_config({"scenario": "variance_fidelity", "noise_sd": -1})
