import json
import subprocess
import sys

import pytest

from edgeslice.cli import main
from edgeslice.experiment import CSV_COLUMNS


@pytest.fixture
def scenario(tmp_path):
    path = tmp_path / "s.json"
    assert main(["generate", "--seed", "7", "--K", "2", "--nodes-per-cluster", "2", "--requests", "6",
                 "--out", str(path)]) == 0
    return path


def test_generate_is_seeded(tmp_path, scenario):
    again = tmp_path / "again.json"
    main(["generate", "--seed", "7", "--K", "2", "--nodes-per-cluster", "2", "--requests", "6", "--out", str(again)])
    assert again.read_bytes() == scenario.read_bytes()


def test_generate_to_stdout(capsys):
    assert main(["generate", "--seed", "1", "--K", "1", "--nodes-per-cluster", "1", "--requests", "1"]) == 0
    assert json.loads(capsys.readouterr().out)["schema_version"] == 1


@pytest.mark.parametrize("solver", ["oesp", "vesp", "dcesp", "OESP"])
def test_solve_prints_solution(scenario, capsys, solver):
    assert main(["solve", "--scenario", str(scenario), "--solver", solver, "--seed", "7"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert "objective" in out and len(out["admission"]) == 6


def test_solve_then_validate(tmp_path, scenario, capsys):
    sol = tmp_path / "sol.json"
    assert main(["solve", "--scenario", str(scenario), "--out", str(sol)]) == 0
    assert main(["validate", "--scenario", str(scenario), "--solution", str(sol)]) == 0
    assert json.loads(capsys.readouterr().out)["feasible"] is True


def test_tampered_solution_fails(tmp_path, scenario, capsys):
    sol = tmp_path / "sol.json"
    main(["solve", "--scenario", str(scenario), "--out", str(sol)])
    data = json.loads(sol.read_text())
    assert data["allocation"], "fixture should admit something"
    for item in data["allocation"]:
        item["amount"] *= 10
    sol.write_text(json.dumps(data))
    capsys.readouterr()
    assert main(["validate", "--scenario", str(scenario), "--solution", str(sol)]) == 2
    err = capsys.readouterr().err
    assert "capacity exceeded: node" in err and "type" in err


def test_unknown_ids_fail_validation(tmp_path, scenario, capsys):
    sol = tmp_path / "sol.json"
    sol.write_text(json.dumps({"schema_version": 1, "objective": 0, "admission": [{"request": 99, "admitted": 1}], "allocation": []}))
    assert main(["validate", "--scenario", str(scenario), "--solution", str(sol)]) == 2
    assert "99" in capsys.readouterr().err


def test_dcesp_trace_file(tmp_path, scenario):
    trace = tmp_path / "trace.csv"
    main(["solve", "--scenario", str(scenario), "--solver", "dcesp", "--trace", str(trace), "--out",
          str(tmp_path / "o.json")])
    assert trace.read_text().startswith("iteration,objective,r_p,r_d,penalty")


def test_experiment_writes_csv(tmp_path):
    cfg = tmp_path / "eps.toml"
    cfg.write_text('study = "EpsilonSweep"\nsolvers = ["OESP", "VESP"]\nK = 2\nD_c = [4]\nR = [3]\n'
                   'epsilon = [0.0, 0.3]\nseed = 2\n')
    out = tmp_path / "out.csv"
    assert main(["experiment", "--config", str(cfg), "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 1 + 4


@pytest.mark.parametrize("argv", [
    [], ["solve"], ["solve", "--scenario", "x.json", "--solver", "magic"], ["frobnicate"],
    ["generate", "--K", "zero"],
])
def test_usage_errors(argv, capsys):
    assert main(argv) == 1
    captured = capsys.readouterr()
    assert captured.err and not captured.out


def test_bad_input_file(tmp_path, capsys):
    assert main(["solve", "--scenario", str(tmp_path / "missing.json")]) == 1
    assert "missing.json" in capsys.readouterr().err


def test_module_entry_point(scenario):
    proc = subprocess.run([sys.executable, "-m", "edgeslice", "solve", "--scenario", str(scenario)],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "objective" in json.loads(proc.stdout)
