import functools
import json
import subprocess
import sys

import numpy as np
import pytest
import scipy.sparse as sp

from jordanreduce import cli
from jordanreduce.builders import cycle_graph
from jordanreduce.conic import ConicProblem
from jordanreduce.io import read_partition, write_dimacs_graph, write_problem
from jordanreduce.reduced import solve

from _helpers import read_sdpa


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_reduce_table_row(capsys, tmp_path):
    code, out, _ = run(capsys, "reduce", "esc16f", "--offline", "--cache-dir", str(tmp_path))
    assert code == 0
    assert out.strip().splitlines()[-1] == "esc16f & 32896 & 3"
    assert "admissible=True" in out


def test_reduce_json_and_partition_file(capsys, tmp_path):
    part = tmp_path / "p.json"
    code, out, _ = run(capsys, "reduce", "--cycle", "5", "--json", "--out", str(part))
    doc = json.loads(out)
    assert code == 0 and doc["reduced_dim"] == 3
    assert doc["certificate"]["admissible"] and doc["certificate"]["max_violation"] < 1e-7
    assert read_partition(part).n_parts == 3


def test_blockdiag_with_given_partition(capsys, tmp_path):
    part = tmp_path / "p.json"
    run(capsys, "reduce", "--er", "3", "--out", str(part))
    code, out, _ = run(capsys, "blockdiag", "--er", "3", str(part), "--json")
    doc = json.loads(out)
    assert code == 0 and doc["structure"] == "3×1, 2×2"
    assert doc["check"]["max_deviation"] < 1e-7


def test_blockdiag_complex_flag(capsys):
    code, out, _ = run(capsys, "blockdiag", "--cycle", "7", "--complex")
    assert code == 0
    assert out.splitlines()[0] == "1×4"


def test_blockdiag_rejects_foreign_partition(capsys, tmp_path):
    part = tmp_path / "p.json"
    # a valid partition of the right order that ignores the objective
    i, j = np.indices((5, 5))
    part.write_text(json.dumps({"n": 5, "labels": ((i != j).astype(int).ravel() + 1).tolist()}))
    problem = tmp_path / "prob.json"
    C = np.zeros((5, 5))
    C[0, 1] = C[1, 0] = 1.0
    write_problem(ConicProblem(5, C.ravel(), sp.csr_matrix(np.eye(5).reshape(1, -1)), np.ones(1)), problem)
    code, _, err = run(capsys, "blockdiag", str(problem), str(part))
    assert code == cli.EXIT_REDUCE
    assert "not admissible" in err


def test_solve_c5(capsys):
    code, out, _ = run(capsys, "solve", "--cycle", "5", "--json")
    doc = json.loads(out)
    assert code == 0 and doc["status"] == "optimal"
    assert doc["objective"] == pytest.approx(np.sqrt(5), abs=1e-7)


def test_theta_prime_dimacs_file(capsys, tmp_path):
    g = tmp_path / "c5.col"
    g.write_text(write_dimacs_graph(cycle_graph(5)))
    code, out, _ = run(capsys, "theta-prime", str(g), "--json")
    assert code == 0 and json.loads(out)["objective"] == pytest.approx(np.sqrt(5), abs=1e-7)


def test_theta_prime_er_reports_ev_bound(capsys):
    code, out, _ = run(capsys, "theta-prime", "--er", "3", "--json")
    doc = json.loads(out)
    assert code == 0
    assert doc["objective"] == pytest.approx(5.0, abs=1e-6)
    assert doc["ev_bound"] == pytest.approx(5.559861885833123, abs=1e-9)


def test_qap_build_only(capsys, tmp_path):
    out_json = tmp_path / "q.json"
    code, out, _ = run(capsys, "qap", "scr12", "--build-only", "--offline", "--cache-dir", str(tmp_path),
                       "--out", str(out_json))
    assert code == 0 and "order 144" in out
    assert json.loads(out_json.read_text())["n"] == 144


def test_qap_solve_esc16f(capsys, tmp_path):
    code, out, _ = run(capsys, "qap", "esc16f", "--json", "--offline", "--cache-dir", str(tmp_path))
    doc = json.loads(out)
    assert code == 0 and doc["structure"] == "1×3" and doc["objective"] == pytest.approx(0.0, abs=1e-6)


def test_qap_dat_file(capsys, tmp_path):
    from jordanreduce.io import vendored_qaplib
    path = tmp_path / "esc16f.dat"
    path.write_text(vendored_qaplib("esc16f").read_text())
    code, out, _ = run(capsys, "reduce", str(path))
    assert code == 0 and out.strip().endswith("esc16f & 32896 & 3")


def test_stalled_solve_is_numerical_limit(capsys, tmp_path):
    code, out, _ = run(capsys, "solve", "esc16a", "--offline", "--cache-dir", str(tmp_path))
    assert code == cli.EXIT_NUMERICAL
    assert "numerical_limit" in out


def test_infeasible_exit_code(capsys, tmp_path):
    n = 3
    A = sp.csr_matrix(np.array([np.eye(n).ravel(), np.ones(n * n)]))
    path = tmp_path / "inf.json"
    write_problem(ConicProblem(n, np.ones(n * n), A, np.array([1.0, -1.0])), path)
    code, out, _ = run(capsys, "solve", str(path))
    assert code == cli.EXIT_INFEASIBLE and "infeasible" in out


def test_solver_cap_exit_code_and_export(capsys, tmp_path, monkeypatch):
    monkeypatch.setattr(cli, "solve", functools.partial(solve, cap=1))
    code, out, _ = run(capsys, "theta-prime", "--er", "3")
    assert code == cli.EXIT_CAP and "not solved" in out
    sdpa = tmp_path / "er3.dat-s"
    code, _, _ = run(capsys, "theta-prime", "--er", "3", "--export-sdpa", str(sdpa))
    assert code == 0
    c, sizes, _ = read_sdpa(sdpa)
    assert c.size > 0 and (tmp_path / "er3.dat-s.json").exists()


@pytest.mark.parametrize("argv", [["reduce", "no/such/file.json"], ["reduce"], ["theta-prime"]])
def test_input_errors(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == cli.EXIT_INPUT and err.startswith("error:")


def test_bad_problem_file(capsys, tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"n": 2, "constraints": []}')
    code, _, _ = run(capsys, "reduce", str(path))
    assert code == cli.EXIT_INPUT


def test_fetch_error_exit_code(capsys, tmp_path):
    code, _, err = run(capsys, "reduce", "nug20", "--offline", "--cache-dir", str(tmp_path))
    assert code == cli.EXIT_FETCH and "offline" in err


def test_entry_point_subprocess():
    res = subprocess.run([sys.executable, "-m", "jordanreduce.cli", "reduce", "--cycle", "5"],
                         capture_output=True, text=True, timeout=300)
    assert res.returncode == 0
    assert res.stdout.strip().endswith("& 15 & 3")
