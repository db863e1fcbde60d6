import csv
import json
import pathlib
import subprocess
import sys

import numpy as np
import pytest

from nlsmod.cli import EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_DEGENERATE, EXIT_NO_CONVERGENCE, EXIT_OK, dumps, main
from nlsmod.config import load_config
from nlsmod.geometry import BranchpointSet
from nlsmod.rhp import eval_h, solve_constants
from nlsmod.scattering import parse_f0

CONFIGS = pathlib.Path(__file__).resolve().parent.parent / "configs"
F1 = CONFIGS / "f1.yaml"


def run(*args):
    return main([str(a) for a in args])


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def f1_text(**extra):
    text = F1.read_text()
    for k, v in extra.items():
        text += f"{k}: {v}\n"
    return text


def read_csv(path):
    return list(csv.reader(line for line in path.read_text().splitlines() if not line.startswith("#")))


def test_solve(tmp_path):
    out = tmp_path / "solve.json"
    assert run("solve", "--config", F1, "--out", out) == EXIT_OK
    data = json.loads(out.read_text())
    assert data["schema_version"] == 1 and data["command"] == "solve"
    assert data["report"]["converged"]
    assert data["config"]["f0"] == load_config(str(F1)).f0
    alphas = np.array([complex(*a) for a in data["report"]["final_alphas"]])
    assert np.max(np.abs(alphas - np.array([1j, 1 + 0.8j, 2 + 0.6j]))) < 1e-9


def test_solve_is_deterministic(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    run("solve", "--config", F1, "--out", a)
    run("solve", "--config", F1, "--out", b)
    assert a.read_bytes() == b.read_bytes()


def test_solve_non_convergence_exit(tmp_path):
    cfg = write(tmp_path, "c.yaml", F1.read_text().replace("max_iter: 30", "max_iter: 0").replace('"1j"', '"0.1+1j"'))
    assert run("solve", "--config", cfg, "--out", tmp_path / "o.json") == EXIT_NO_CONVERGENCE
    assert not json.loads((tmp_path / "o.json").read_text())["report"]["converged"]


def test_evolve_csv_endpoint_matches_solve(tmp_path):
    out = tmp_path / "sweep.csv"
    assert run("evolve", "--config", CONFIGS / "f1_sweep.yaml", "--out", out) == EXIT_OK
    rows = read_csv(out)
    header, body = rows[0], rows[1:]
    assert header[:4] == ["x", "t", "re_alpha0", "im_alpha0"]
    assert len(body) == 6 and float(body[-1][0]) == 0.35
    prev = [complex(float(body[-2][2 + 2 * j]), float(body[-2][3 + 2 * j])) for j in range(3)]
    text = F1.read_text().replace("x: 0.3", "x: 0.35").replace('["1j", "1+0.8j", "2+0.6j"]', json.dumps([repr(a) for a in prev]))
    text = text.replace("tol: 1.0e-10", "tol: 1.0e-13")
    solved = tmp_path / "end.json"
    assert run("solve", "--config", write(tmp_path, "end.yaml", text), "--out", solved) == EXIT_OK
    direct = np.array([complex(*a) for a in json.loads(solved.read_text())["report"]["final_alphas"]])
    end = np.array([complex(float(body[-1][2 + 2 * j]), float(body[-1][3 + 2 * j])) for j in range(3)])
    assert np.max(np.abs(end - direct)) < 1e-8


def test_evolve_truncation_exit(tmp_path):
    out = tmp_path / "z.json"
    assert run("evolve", "--config", CONFIGS / "zero.yaml", "--out", out) == EXIT_DEGENERATE
    traj = json.loads(out.read_text())["trajectory"]
    assert traj["truncated"] and traj["reason"] == "c_j collapsed"
    cfg = write(tmp_path, "zc.yaml", (CONFIGS / "zero.yaml").read_text() + "output: {format: csv}\n")
    out = tmp_path / "z.csv"
    assert run("evolve", "--config", cfg, "--out", out) == EXIT_DEGENERATE
    assert out.read_text().rstrip().endswith("# truncated: c_j collapsed")


def test_evolve_json(tmp_path):
    cfg = write(tmp_path, "j.yaml", f1_text(sweep="{axis: x, from: 0.3, to: 0.31, step: 0.01}"))
    out = tmp_path / "e.json"
    assert run("evolve", "--config", cfg, "--out", out) == EXIT_OK
    traj = json.loads(out.read_text())["trajectory"]
    assert len(traj["points"]) == 2 and not traj["truncated"]


def test_verify_passes_and_is_job_independent(tmp_path):
    a, b = tmp_path / "v1.json", tmp_path / "v2.json"
    assert run("verify", "--config", F1, "--out", a) == EXIT_OK
    assert run("verify", "--config", F1, "--out", b, "--jobs", "2") == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    data = json.loads(a.read_text())
    names = [c["name"] for c in data["checks"]]
    assert len(names) == len(set(names)) == 13
    assert all(c["status"] == "pass" for c in data["checks"])


def test_verify_detuned_fails(tmp_path):
    out = tmp_path / "d.json"
    assert run("verify", "--config", CONFIGS / "f1_detuned.yaml", "--out", out) == EXIT_CHECK_FAILED
    checks = {c["name"]: c for c in json.loads(out.read_text())["checks"]}
    assert checks["modulation_residual"]["status"] == "fail"
    assert checks["theorem"]["status"] == "fail"


def test_verify_project_repairs_detuned(tmp_path):
    out = tmp_path / "p.json"
    assert run("verify", "--config", CONFIGS / "f1_detuned.yaml", "--project", "--out", out) == EXIT_OK


def test_verify_zero_data_skips(tmp_path):
    out = tmp_path / "z.json"
    assert run("verify", "--config", CONFIGS / "zero.yaml", "--out", out) == EXIT_OK
    checks = {c["name"]: c for c in json.loads(out.read_text())["checks"]}
    assert checks["theorem"]["status"] == "skipped" and checks["theorem"]["reason"]
    assert checks["jump"]["status"] == "pass"


def test_sample_zero_data_is_zero(tmp_path):
    out = tmp_path / "s.csv"
    cfg = write(tmp_path, "s.yaml", (CONFIGS / "zero.yaml").read_text() + "output: {format: csv}\n")
    assert run("sample", "--config", cfg, "--out", out) == EXIT_OK
    rows = read_csv(out)
    assert rows[0][-2:] == ["location", "skipped"]
    assert len(rows) == 1 + 9 * 8
    for r in rows[1:]:
        if r[-1] == "0":
            assert all(float(v) == 0.0 for v in r[2:8])


@pytest.fixture(scope="module")
def f1_grid(tmp_path_factory):
    d = tmp_path_factory.mktemp("grid")
    # the grid hits alpha_0 = i exactly
    cfg = write(d, "g.yaml", f1_text(grid="{re: [-1.0, 3.0, 9], im: [-1.0, 2.5, 8]}", output="{format: csv}"))
    out = d / "g.csv"
    assert run("sample", "--config", cfg, "--out", out) == EXIT_OK
    return cfg, out


def test_sample_skips_branchpoints_and_matches_library(f1_grid, f1_sol):
    _, out = f1_grid
    rows = read_csv(out)[1:]
    assert len(rows) == 72
    by_z = {complex(float(r[0]), float(r[1])): r for r in rows}
    hit = [z for z in by_z if abs(z - 1j) < 1e-12]
    assert hit and by_z[hit[0]][-1] == "1" and by_z[hit[0]][-2] == "contour"
    live = [z for z, r in by_z.items() if r[-1] == "0"]
    assert len(live) >= 60
    pts = np.array(live[::7])
    want = np.asarray(eval_h(f1_sol, pts))
    got = np.array([complex(float(by_z[z][4]), float(by_z[z][5])) for z in pts])
    assert np.max(np.abs(got - want) / np.abs(want)) < 1e-10


def test_sample_is_job_independent(f1_grid, tmp_path):
    cfg, out = f1_grid
    again = tmp_path / "g4.csv"
    assert run("sample", "--config", cfg, "--out", again, "--jobs", "2") == EXIT_OK
    assert again.read_bytes() == out.read_bytes()


@pytest.mark.parametrize(
    "command,text",
    [("sample", MIN := '{f0: "z", N: 0, initial_alphas: ["1j"]}'), ("evolve", MIN), ("solve", '{f0: "z", N: 2}')],
)
def test_missing_sections_exit_config(tmp_path, command, text):
    assert run(command, "--config", write(tmp_path, "m.yaml", text + "\n")) == EXIT_CONFIG


def test_malformed_expression_reports_position(tmp_path, caplog):
    cfg = write(tmp_path, "bad.yaml", 'f0: "z^3 + * 2"\nN: 0\ninitial_alphas: ["1j"]\n')
    assert run("solve", "--config", cfg) == EXIT_CONFIG
    assert "line 1" in caplog.text and "position" in caplog.text


def test_missing_file_and_bad_jobs(tmp_path):
    assert run("solve", "--config", tmp_path / "nope.yaml") == EXIT_CONFIG
    assert run("verify", "--config", F1, "--jobs", "0") == EXIT_CONFIG


def test_intersecting_custom_arcs_exit_config(tmp_path):
    text = f1_text(geometry="{custom_arcs: {c1+: [[1.5, 1.2], [1.5, 0.3]]}}")
    assert run("solve", "--config", write(tmp_path, "x.yaml", text)) == EXIT_CONFIG


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "nlsmod", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for name in ("solve", "evolve", "verify", "sample"):
        assert name in res.stdout


def test_dumps_is_stable():
    obj = {"a": 0.1, "b": [1.0, float("nan")], "c": 1 + 2j, "d": {}, "e": [], "f": [{"g": True}]}
    text = dumps(obj)
    assert dumps(obj) == text
    assert '"a": 0.10000000000000001' in text and "NaN" in text


def test_n0_solve(tmp_path):
    cfg = write(tmp_path, "n0.yaml", 'f0: "z^2 + (0.5 - 1i)*z + 1"\nN: 0\ninitial_alphas: ["0.3+0.8j"]\n')
    out = tmp_path / "n0.json"
    assert run("solve", "--config", cfg, "--out", out) == EXIT_OK
    a = complex(*json.loads(out.read_text())["report"]["final_alphas"][0])
    assert abs(a - (-0.25 + 1j)) < 1e-9
    sol = solve_constants(BranchpointSet.from_upper([a]), None, parse_f0("z^2 + (0.5 - 1i)*z + 1"), 0, 0)
    assert sol.D == 1
