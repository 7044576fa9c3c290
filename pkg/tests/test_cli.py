import csv
import json
import subprocess
import sys

import pytest

from avqslab import cli
from avqslab.qcore import bell_state, state_to_json

ALL_COMMANDS = [
    ["entropy", "--state", "schmidt:0.75,0.25"],
    ["distill-rate", "--state", "mixed", "--instrument", "computational"],
    ["optimize", "--set", "bell", "product", "--iters", "3", "--restarts", "2", "--branches", "2"],
    ["schur", "--d", "2", "--l", "4", "--eta", "0.25", "--state", "classical"],
    ["robustify", "--symbols", "2", "--l", "3", "--tables", "3"],
    ["derandomize"],
    ["counterexample", "--N", "3", "--grid", "5"],
]


def run_cli(argv, tmp_path, name="out.json"):
    out = tmp_path / name
    code = cli.main(argv + ["--out", str(out)])
    return code, json.loads(out.read_text())


def write(tmp_path, obj, name="scenario.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return str(p)


@pytest.mark.parametrize("argv", ALL_COMMANDS, ids=lambda a: a[0])
def test_subcommands_pass_and_report_shape(argv, tmp_path):
    code, rep = run_cli(argv, tmp_path)
    assert code == 0
    assert rep["passed"] is True
    assert set(rep) == {"config", "results", "assertions", "passed", "tolerances", "provenance"}
    assert rep["config"]["command"] == argv[0]
    assert set(rep["provenance"]) == {"tool", "version", "seed", "kernel_backend", "wall_time"}
    for a in rep["assertions"]:
        assert set(a) == {"name", "value", "tol", "passed"}


def test_entropy_values(tmp_path):
    _, rep = run_cli(["entropy", "--state", "bell"], tmp_path)
    assert rep["results"]["S(A|B)"] == pytest.approx(-1, abs=1e-10)
    assert rep["results"]["I(A;B)"] == pytest.approx(2, abs=1e-10)


def test_derandomize_reference_values(tmp_path):
    _, rep = run_cli(["derandomize"], tmp_path)
    r = rep["results"]
    assert r["worst_mean"] == r["oracle_worst_mean"] == 0.234375
    assert r["bound_positive"] is False and r["success"] is True


def test_counterexample_gap(tmp_path):
    _, rep = run_cli(["counterexample", "--N", "4", "--grid", "4"], tmp_path)
    assert rep["results"]["gap"] == pytest.approx(2, abs=1e-6)


@pytest.mark.parametrize("argv", [["schur", "--d", "2", "--l", "3"], ["robustify", "--tables", "2"]],
                         ids=lambda a: a[0])
def test_csv_output(argv, tmp_path):
    path = tmp_path / "t.csv"
    assert cli.main(argv + ["--out", str(tmp_path / "r.json"), "--csv", str(path)]) == 0
    rows = list(csv.DictReader(path.open()))
    assert rows and all(len(r) == len(rows[0]) for r in rows)


def test_run_scenario_and_user_assertions(tmp_path):
    cfg = {"command": "entropy", "inputs": {"state": "bell"},
           "assertions": [{"quantity": "S(A|B)", "value": -1, "tol": 1e-10}]}
    out = tmp_path / "r.json"
    assert cli.main(["run", write(tmp_path, cfg), "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["assertions"][-1]["passed"] is True


def test_failed_assertion_exit_code(tmp_path, capsys):
    cfg = {"command": "entropy", "inputs": {"state": "bell"},
           "assertions": [{"quantity": "S(A|B)", "value": 0, "tol": 1e-3}]}
    assert cli.main(["run", write(tmp_path, cfg), "--out", str(tmp_path / "r.json")]) == 1
    assert "assertion failed" in capsys.readouterr().err


def test_unknown_assertion_quantity(tmp_path):
    cfg = {"command": "entropy", "inputs": {"state": "bell"}, "assertions": [{"quantity": "nope", "value": 0}]}
    assert cli.main(["run", write(tmp_path, cfg)]) == 2


def test_schema_errors(tmp_path, capsys):
    bad = {"command": "schur", "params": {"d": 9, "l": 3}}
    path = write(tmp_path, bad)
    assert cli.main(["validate", path]) == 2
    msg = capsys.readouterr().out
    assert "params" in msg and "d" in msg
    assert cli.main(["run", path]) == 2
    assert cli.main(["validate", write(tmp_path, {"command": "launch"}, "b.json")]) == 2


def test_validate_ok(tmp_path, capsys):
    assert cli.main(["validate", write(tmp_path, {"command": "derandomize", "seed": 3})]) == 0
    assert capsys.readouterr().out == ""


def test_io_errors(tmp_path):
    assert cli.main(["run", str(tmp_path / "missing.json")]) == 3
    cfg = {"command": "entropy", "inputs": {"state": {"file": "nowhere.json"}}}
    path = write(tmp_path, cfg)
    assert cli.main(["validate", path]) == 3
    assert cli.main(["run", path]) == 3
    assert cli.main(["entropy", "--out", str(tmp_path / "no" / "dir" / "x.json")]) == 3


def test_malformed_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert cli.main(["run", str(p)]) == 2


def test_library_value_error_maps_to_schema_code(tmp_path):
    # a separable base has no negative conditional entropy, so the family is undefined
    assert cli.main(["counterexample", "--base", "product", "--out", str(tmp_path / "x.json")]) == 2


def test_state_file_input(tmp_path):
    path = write(tmp_path, state_to_json(bell_state()), "bell.json")
    code, rep = run_cli(["entropy", "--state", path], tmp_path)
    assert code == 0 and rep["results"]["S(A|B)"] == pytest.approx(-1, abs=1e-10)


@pytest.mark.parametrize("argv", ALL_COMMANDS, ids=lambda a: a[0])
def test_rerun_is_byte_identical(argv, tmp_path):
    _, first = run_cli(argv, tmp_path, "a.json")
    replay = tmp_path / "b.json"
    assert cli.main(["run", str(tmp_path / "a.json"), "--out", str(replay)]) == 0
    second = json.loads(replay.read_text())
    assert cli.comparable_payload(first) == cli.comparable_payload(second)
    assert first["provenance"]["wall_time"] >= 0


def test_thread_count_does_not_change_report(tmp_path, monkeypatch):
    argv = ["optimize", "--set", "bell", "mixed", "--iters", "4", "--restarts", "3", "--seed", "5"]
    _, a = run_cli(argv, tmp_path, "a.json")
    monkeypatch.setenv("AVQSLAB_THREADS", "3")
    _, b = run_cli(argv, tmp_path, "b.json")
    assert cli.comparable_payload(a) == cli.comparable_payload(b)


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "avqslab.cli", "entropy"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["passed"] is True
