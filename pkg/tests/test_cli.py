import json
import subprocess
import sys

import numpy as np
import pytest

from proxmed.cli import main
from proxmed.fixtures import fixture_document, load_fixture
from proxmed.model import spec_to_dict
from proxmed.oracle import true_estimands

import reference


def _run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_oracle_d1(capsys):
    code, out, _ = _run(capsys, "oracle", "D1", "--a", "1", "--a-prime", "0")
    assert code == 0
    doc = json.loads(out)
    bf = reference.estimands(spec_to_dict(load_fixture("D1")), 1, 0)
    assert np.allclose([doc["psi1"], doc["psi2"], doc["psi3"]], bf, atol=1e-12)
    assert doc["bridges_exist"] == {"outcome_h": True, "treatment_q": True}
    assert doc["completeness"]["z_side"]["complete"]
    assert doc["identified_components"] == {"psi1": "psi1", "psi2": "psi3"}


def test_oracle_from_file(tmp_path, capsys):
    path = tmp_path / "g1.json"
    path.write_text(json.dumps(fixture_document("G1")))
    code, out, _ = _run(capsys, "oracle", str(path))
    assert code == 0
    assert json.loads(out)["psi3"] == pytest.approx(true_estimands(load_fixture("G1"), 1, 0).psi3, abs=1e-15)


def test_simulate_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert _run(capsys, "simulate", "D1", "--n", "100", "--seed", "7", "--out", str(a))[0] == 0
    assert _run(capsys, "simulate", "D1", "--n", "100", "--seed", "7", "--out", str(b))[0] == 0
    assert a.read_bytes() == b.read_bytes()
    assert len(a.read_text().splitlines()) == 101


def test_estimate_empty_csv(tmp_path, capsys):
    p = tmp_path / "empty.csv"
    p.write_text("")
    code, _, err = _run(capsys, "estimate", str(p), "--estimand", "psi1", "--a-prime", "0")
    assert code == 2 and "schema error" in err


def test_estimate_round_trip(tmp_path, capsys):
    data = tmp_path / "d.csv"
    _run(capsys, "simulate", "D1", "--n", "600", "--seed", "3", "--out", str(data))
    code, out, _ = _run(capsys, "estimate", str(data), "--estimand", "psi1", "--strategy", "s5",
                        "--a", "1", "--a-prime", "0", "--folds", "3")
    assert code == 0
    doc = json.loads(out)
    assert doc["strategy"] == "s5_mr" and doc["n"] == 600 and doc["folds"] == 3
    assert abs(doc["point"] - true_estimands(load_fixture("D1"), 1, 0).psi1) < 0.15
    code, out, _ = _run(capsys, "estimate", str(data), "--estimand", "psi3", "--strategy", "s2")
    assert code == 0 and json.loads(out)["estimand"] == "psi3"


def test_estimate_numerical_failure(tmp_path, capsys):
    p = tmp_path / "nan.csv"
    rows = ["x,a,z,w,y"] + [f"{0.1 * i},{i % 2},{0.3 * i},{-0.2 * i},{'nan' if i == 4 else i}"
                            for i in range(12)]
    p.write_text("\n".join(rows) + "\n")
    code, _, err = _run(capsys, "estimate", str(p), "--estimand", "psi2", "--strategy", "s1")
    assert code == 3 and "numerical" in err


def test_validate(tmp_path, capsys):
    assert _run(capsys, "validate", "D1")[0] == 0
    doc = spec_to_dict(load_fixture("D1"))
    doc["tables"]["p_m_given_ax"][0][0] = [1.0, 0.0]
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(doc))
    code, out, _ = _run(capsys, "validate", str(p))
    assert code == 1 and not json.loads(out)["ok"]


def test_schema_errors_name_key(tmp_path, capsys):
    doc = spec_to_dict(load_fixture("D1"))
    del doc["tables"]["p_w_given_mx"]
    p = tmp_path / "missing.json"
    p.write_text(json.dumps(doc))
    code, _, err = _run(capsys, "oracle", str(p))
    assert code == 2 and "tables.p_w_given_mx" in err
    p.write_text("{not json")
    assert _run(capsys, "validate", str(p))[0] == 2
    assert _run(capsys, "validate", str(tmp_path / "absent.json"))[0] == 2


def test_study(tmp_path, capsys):
    cfg = tmp_path / "study.json"
    cfg.write_text(json.dumps({"spec": "D1", "patterns": ["none", "h+q", "q+pw"],
                               "strategies": ["s5_mr", "s2_qa"]}))
    out = tmp_path / "r.csv"
    js = tmp_path / "r.json"
    code, _, _ = _run(capsys, "study", str(cfg), "--out", str(out), "--json", str(js), "--no-timing")
    assert code == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 1 + 2 * 2 * 3 and "runtime_s" not in lines[0]
    assert json.loads(js.read_text())["meta"]["config"]["spec"] == "D1"
    cfg.write_text(json.dumps({"spec": "D1", "replicates": 3}))
    code, _, err = _run(capsys, "study", str(cfg))
    assert code == 2 and "replicates" in err


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "proxmed", "oracle", "F1"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["model_kind"] == "front_door"
