import json

import pytest

from hamreeb.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_analyze_disk(capsys):
    code, out, _ = run(capsys, "analyze", "--surface", "disk", "--field", "r2")
    rep = json.loads(out)
    assert code == 0
    assert rep["in_class_Morse"] is True and rep["homotopy_case"] == "Circle(B)"
    assert set(rep) >= {"command", "inputs", "checks", "passed"}
    assert {"name", "residual", "tolerance", "passed"} <= set(rep["checks"][0])


def test_analyze_degenerate_without_declaration_fails(capsys):
    code, out, _ = run(capsys, "analyze", "--field", "r4")
    assert code == 1 and json.loads(out)["in_class_F"] is False


def test_volumes_obstructed(capsys):
    code, out, _ = run(capsys, "volumes", "--surface", "twowell", "--form", "tilted", "--level", "0.5",
                       "--involution", "negate")
    assert code == 0
    assert json.loads(out)["obstructed"] is True


def test_counterexample(capsys):
    code, out, _ = run(capsys, "counterexample")
    rep = json.loads(out)
    assert code == 0 and rep["passed"] and rep["scenario"]["passed"]


def test_reeb_dot_and_json(capsys):
    code, out, _ = run(capsys, "reeb", "--surface", "twowell-domain", "--resolution", "0.04",
                       "--format", "dot")
    assert code == 0 and out.startswith("graph reeb")
    code, out, _ = run(capsys, "reeb", "--surface", "torus", "--resolution", "0.05")
    assert code == 0 and json.loads(out)["betti1"] == 1


def test_flow_csv(capsys):
    code, out, _ = run(capsys, "flow", "--time", "0.5", "--every", "100", "--format", "csv")
    lines = out.strip().splitlines()
    assert code == 0 and lines[0] == "t,chart,x,y,f" and len(lines) == 7


def test_shift_from_file(capsys, tmp_path):
    gf = {"nodes": {"0": 0.5, "1": 0.5}, "edges": {"0": {"params": [0.0, 1.0], "values": [0.5, 0.5]}}}
    path = tmp_path / "gf.json"
    path.write_text(json.dumps(gf))
    code, out, _ = run(capsys, "shift", "--graph-function", str(path), "--samples", "40")
    assert code == 0 and json.loads(out)["passed"]


def test_malformed_graph_function_exits_2(capsys, tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    code, _, err = run(capsys, "shift", "--graph-function", str(path))
    assert code == 2 and "graph function" in err
    path.write_text(json.dumps({"nodes": []}))
    assert run(capsys, "shift", "--graph-function", str(path))[0] == 2


@pytest.mark.parametrize("argv", [
    ["analyze", "--surface", "mobius"],
    ["analyze", "--field", "nope"],
    ["volumes", "--form", "wavy", "--level", "0.5"],
    ["volumes", "--surface", "twowell", "--level", "1.0"],
    ["flow", "--point", "1,2,3"],
    ["frobnicate"],
])
def test_bad_input_exits_2(capsys, argv):
    assert run(capsys, *argv)[0] == 2


def test_theta_without_periodic_orbits_fails(capsys):
    code, out, _ = run(capsys, "theta", "--surface", "twowell", "--resolution", "0.05")
    assert code == 1
    assert json.loads(out)["checks"][0]["name"] == "theta_exists"


def test_reports_are_byte_identical(capsys):
    argv = ["volumes", "--surface", "twowell", "--level", "0.5", "--resolution", "0.04", "--seed", "3"]
    assert run(capsys, *argv)[1] == run(capsys, *argv)[1]


def test_out_directory_and_env_override(capsys, tmp_path, monkeypatch):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["analyze", "--out", str(a)]) == 0
    assert json.loads((a / "analyze.json").read_text())["command"] == "analyze"
    monkeypatch.setenv("HAMREEB_OUT", str(b))
    assert main(["flow", "--out", str(a), "--format", "csv", "--time", "0.1"]) == 0
    assert (b / "flow.csv").read_text().startswith("t,chart")
    assert (b / "flow.json").exists() and not (a / "flow.csv").exists()
    assert capsys.readouterr().out == ""


def test_verify_all_single_module(capsys):
    code, out, _ = run(capsys, "verify-all", "--only", "fields")
    rep = json.loads(out)
    assert code == 0 and rep["passed"]
    assert all(c["name"].startswith("fields.") for c in rep["checks"])
    assert {"check", "samples", "max_residual", "tolerance", "passed"} <= set(rep["verification"][0])


@pytest.mark.parametrize("seed", [0, 1])
def test_random_shift_on_twowell_tilted_is_area_preserving(capsys, seed):
    # samples land on collar edges and in the steep boundary collar
    code, out, _ = run(capsys, "shift", "--surface", "twowell", "--form", "tilted", "--seed", str(seed))
    assert code == 0
    assert max(c["residual"] for c in json.loads(out)["checks"]) < 1e-5
