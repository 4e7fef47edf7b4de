import io
import json
import subprocess
import sys
from pathlib import Path

import pytest

from dcnid.cli import run

DATA = Path(__file__).resolve().parents[1] / "demos" / "data"
TRAFFIC = str(DATA / "traffic.json")
WEEKDAY = str(DATA / "weekday_schedule.csv")
UNIFORM = str(DATA / "p0_uniform.csv")


def call(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run([str(a) for a in argv], out, err)
    return code, out.getvalue(), err.getvalue()


def query(x="d", tx=3, y="d", ty=6, *extra):
    return ["--spec", TRAFFIC, "--x", x, "--tx", tx, "--y", y, "--ty", ty, *extra]


def test_identify_traffic_window():
    code, out, _ = call("identify", *query(), "--schedule", WEEKDAY, "--p0", UNIFORM)
    assert code == 0 and out.endswith("\n") and out.count("\n") == 1
    doc = json.loads(out)
    assert doc["status"] == "identified" and len(doc["results"]) == 2
    r0 = doc["results"][0]
    assert r0["expression"].startswith("sum_{") and r0["query"]["intervention_value"] == {"d": 0}
    assert r0["a_matrix"]["entries"][5] == pytest.approx([0, 0.4, 0, 0.3, 0, 0.2, 0, 0.1])


def test_identify_is_deterministic():
    a = call("identify", *query(), "--oracle-seed", 5)
    b = call("identify", *query(), "--oracle-seed", 5)
    assert a == b and a[0] == 0


def test_identify_csv():
    code, out, _ = call("identify", *query(), "--schedule", WEEKDAY, "--p0", UNIFORM, "--format", "csv", "--value", "d=1")
    lines = out.strip().splitlines()
    assert code == 0 and lines[0] == "x_value,d=0,d=1" and lines[1].startswith("d=1,")


def test_window_underflow_and_padding():
    code, _, err = call("identify", *query(tx=1, ty=4), "--schedule", WEEKDAY, "--p0", UNIFORM)
    assert code == 1 and "step the initial distribution forward" in err
    code, out, _ = call("identify", *query(tx=1, ty=4), "--schedule", WEEKDAY, "--p0", UNIFORM, "--pad-history")
    assert code == 0 and json.loads(out)["results"][0]["t0"] == -1


def test_hedge_on_bow_exits_two():
    code, out, _ = call("hedge", "--graph", DATA / "bow.json", "--x", "x", "--y", "y")
    doc = json.loads(out)
    assert code == 2 and doc["status"] == "unidentifiable"
    assert doc["hedge"] == {"F": ["x@0", "y@0"], "F_prime": ["y@0"], "R": ["y@0"]}


def test_hedge_on_unrolled_spec():
    code, out, _ = call("hedge", "--spec", TRAFFIC, "--window", "1,4", "--x", "d@3", "--y", "d@4,tr1@4,tr2@4")
    assert code == 0 and json.loads(out)["status"] == "identified"


def test_fuzz_report(capsys):
    code, out, _ = call("fuzz", "--graphs", 500, "--seed", 7)
    doc = json.loads(out)
    assert code == 0 and doc["ok"] and doc["graphs"] == 500 and doc["soundness_violations"] == []


def test_trajectory_csv():
    code, out, _ = call("trajectory", *query(ty=10), "--value", "d=1", "--schedule", WEEKDAY, "--p0", UNIFORM,
                        "--horizon", 12, "--format", "csv")
    lines = out.strip().splitlines()
    assert code == 0 and len(lines) == 14
    assert lines[0].split(",")[-3:] == ["mean_d", "mean_tr1", "mean_tr2"]
    assert lines[4].startswith("3,") and float(lines[4].split(",")[-3]) == 1.0


def test_trajectory_horizon_check():
    code, _, err = call("trajectory", *query(ty=10), "--value", "d=1", "--schedule", WEEKDAY, "--p0", UNIFORM, "--horizon", 5)
    assert code == 1 and "--horizon" in err


def test_transport_with_oracle_domains():
    code, out, _ = call("transport", *query(x="tr1"), "--selection", "tr1,tr2", "--source-seed", 11, "--oracle-seed", 12)
    doc = json.loads(out)
    assert code == 0 and all(r["max_error"] < 1e-9 for r in doc["results"])


def test_transport_unsupported_exits_two(tmp_path):
    spec = {"metavars": [{"name": "x"}, {"name": "y"}], "intra_edges": [["x", "y"]], "cross_edges": [["y", "x"], ["y", "y"]],
            "intra_conf": [["x", "y"]]}
    p = tmp_path / "xy.json"
    p.write_text(json.dumps(spec))
    code, out, _ = call("transport", "--spec", p, "--x", "x", "--tx", 3, "--y", "y", "--ty", 5, "--selection", "y",
                        "--source-seed", 1, "--oracle-seed", 2)
    assert code == 2 and json.loads(out)["status"] == "unsupported_transport"


def test_oracle_check():
    code, out, _ = call("oracle-check", "--spec", TRAFFIC, "--seed", 3, "--horizon", 6, "--x", "tr1", "--tx", 3, "--y", "d",
                        "--value", "tr1=0")
    doc = json.loads(out)
    assert code == 0 and doc["pipeline"]["ok"] and doc["classification"] == "Static"


def test_data_errors_name_the_file(tmp_path):
    bad = tmp_path / "p0.csv"
    bad.write_text("state,prob\nd=0,tr1=0,tr2=0,0.5\n")
    code, _, err = call("identify", *query(), "--schedule", WEEKDAY, "--p0", bad)
    assert code == 1 and "p0.csv" in err
    code, _, err = call("identify", *query(), "--schedule", WEEKDAY)
    assert code == 1
    code, _, err = call("identify", *query(), "--spec", tmp_path / "missing.json", "--oracle-seed", 1)
    assert code == 1


def test_tolerance_from_environment(monkeypatch):
    monkeypatch.setenv("DCNID_TOLERANCE", "-1")
    code, _, err = call("fuzz", "--graphs", 1)
    assert code == 1 and "DCNID_TOLERANCE" in err


def test_dynamic_spec_needs_oracle(tmp_path):
    spec = {"metavars": [{"name": "a"}, {"name": "b"}], "cross_edges": [["a", "b"]], "cross_conf": [["a", "b"]]}
    p = tmp_path / "dyn.json"
    p.write_text(json.dumps(spec))
    code, _, err = call("identify", "--spec", p, "--x", "a", "--tx", 3, "--y", "b", "--ty", 5, "--schedule", WEEKDAY, "--p0", UNIFORM)
    assert code == 1
    code, out, _ = call("identify", "--spec", p, "--x", "a", "--tx", 3, "--y", "b", "--ty", 5, "--oracle-seed", 4)
    assert code == 0


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "dcnid", "hedge", "--graph", str(DATA / "bow.json"), "--x", "x", "--y", "y"],
                          capture_output=True, text=True)
    assert proc.returncode == 2 and json.loads(proc.stdout)["status"] == "unidentifiable"
