import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from gaugepoisson.cli import main
from gaugepoisson.scenario import build_scenario, builtin_names, load_config, resolve_config

DATA = Path(__file__).parent / "data"


def run(*argv):
    return main([str(a) for a in argv])


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def write_config(tmp_path, name, **changes):
    cfg = load_config(name)
    for key, value in changes.items():
        cfg[key] = value
    path = tmp_path / f"{cfg['name']}.json"
    path.write_text(json.dumps(cfg))
    return path


@pytest.fixture(scope="module")
def wu_yang_report(tmp_path_factory):
    out = tmp_path_factory.mktemp("verify") / "report.json"
    code = run("verify", "--config", "wu-yang", "--out", out, "--seed", 42)
    return code, out.read_bytes()


# --- scenario catalogue


def test_scenario_names_golden(capsys):
    assert run("scenarios") == 0
    assert capsys.readouterr().out.split() == DATA.joinpath("scenario_names.txt").read_text().split()


@pytest.mark.parametrize("name", builtin_names())
def test_every_builtin_builds(name):
    scn = build_scenario(load_config(name))
    assert scn.name == name
    assert scn.structure.m == scn.m


def test_resolve_accepts_name_with_suffix():
    assert resolve_config("wu-yang") == resolve_config("wu-yang.json")


# --- verify


def test_verify_passes_and_reports(wu_yang_report):
    code, raw = wu_yang_report
    assert code == 0
    report = json.loads(raw)
    assert report["passed"] and report["seed"] == 42
    names = [c["name"] for c in report["checks"]]
    assert len(names) == len(set(names)) == len(load_config("wu-yang")["verification"]["checks"])
    assert set(report["versions"]) == {"gaugepoisson", "numpy", "scipy"}


def test_verify_output_is_byte_identical(wu_yang_report, tmp_path):
    out = tmp_path / "again.json"
    proc = subprocess.run([sys.executable, "-m", "gaugepoisson", "verify", "--config", "wu-yang", "--out", str(out),
                           "--seed", "42"], capture_output=True)
    assert proc.returncode == 0
    assert out.read_bytes() == wu_yang_report[1]


def test_verify_parallel_matches_serial(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run("verify", "--config", "free-particle", "--out", a) == 0
    assert run("verify", "--config", "free-particle", "--out", b, "--parallel", 4) == 0
    assert a.read_bytes() == b.read_bytes()


def test_config_change_changes_hash(tmp_path):
    path = write_config(tmp_path, "free-particle", description="edited")
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    run("verify", "--config", "free-particle", "--out", a)
    run("verify", "--config", path, "--out", b)
    assert json.loads(a.read_text())["config_sha256"] != json.loads(b.read_text())["config_sha256"]


def test_broken_sign_fails_jacobi(tmp_path, capsys):
    out = tmp_path / "r.json"
    assert run("verify", "--config", "broken-sign", "--out", out) == 1
    checks = {c["name"]: c for c in json.loads(out.read_text())["checks"]}
    assert not checks["jacobi"]["passed"] and checks["antisymmetry"]["passed"]
    assert "FAIL jacobi" in capsys.readouterr().err


# --- average


def test_average_matches_closed_form(tmp_path):
    out = tmp_path / "avg.csv"
    assert run("average", "--config", "wu-yang", "--out", out) == 0
    header, rows = read_csv(out)
    assert len(rows) == 27
    delta = rows[:, [header.index(f"delta{i}") for i in (1, 2, 3)]]
    assert np.max(delta) <= 1e-10


def test_average_free_particle_vanishes(tmp_path):
    out = tmp_path / "avg.csv"
    assert run("average", "--config", "free-particle", "--out", out) == 0
    header, rows = read_csv(out)
    A = rows[:, [header.index(f"A{i}") for i in (1, 2, 3)]]
    assert np.max(np.abs(A)) == 0.0


def test_average_from_points_file(tmp_path):
    pts = tmp_path / "pts.csv"
    pts.write_text("q1,q2,q3,y1,y2,y3\n0,0,1,1,0,0\n")
    out = tmp_path / "avg.csv"
    assert run("average", "--config", "wu-yang", "--points", pts, "--out", out) == 0
    header, rows = read_csv(out)
    np.testing.assert_allclose(rows[0, [header.index(f"A{i}") for i in (1, 2, 3)]], [0, 1, 0], atol=1e-12)


def test_csv_uses_lf_line_endings(tmp_path):
    out = tmp_path / "avg.csv"
    run("average", "--config", "free-particle", "--out", out)
    assert b"\r" not in out.read_bytes()


# --- simulate


def test_simulate_wu_yang(tmp_path):
    out = tmp_path / "traj.csv"
    assert run("simulate", "--config", "wu-yang", "--out", out) == 0
    header, rows = read_csv(out)
    assert header[:2] == ["t", "p1"] and len(rows) == 10001
    report = json.loads((tmp_path / "traj.conservation.json").read_text())
    assert report["passed"]
    assert report["functions"]["H"]["max_rel_drift"] <= 1e-8


def test_free_particle_moves_in_straight_lines(tmp_path):
    out = tmp_path / "traj.csv"
    assert run("simulate", "--config", "free-particle", "--out", out) == 0
    _, rows = read_csv(out)
    init = load_config("free-particle")["simulation"]["initial"]
    t = rows[:, 0]
    expected_q = np.asarray(init["q"]) + np.outer(t, init["p"])
    assert np.max(np.abs(rows[:, 4:7] - expected_q)) <= 1e-9
    assert np.max(np.abs(rows[:, 1:4] - init["p"])) <= 1e-12


def test_simulate_report_path(tmp_path):
    out, rep = tmp_path / "traj.csv", tmp_path / "cons.json"
    assert run("simulate", "--config", "free-particle", "--out", out, "--report", rep) == 0
    assert json.loads(rep.read_text())["scenario"] == "free-particle"


# --- exit codes


def test_missing_config_exits_2(tmp_path):
    assert run("verify", "--config", tmp_path / "nope.json") == 2


def test_invalid_json_exits_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"name": "x", "base_dim": 3}')
    assert run("verify", "--config", bad) == 2


@pytest.mark.parametrize("grid", ["0:1:0", "0:1", "a:b:c", "0:1:2,0:1:2"])
def test_bad_grid_exits_2(grid):
    assert run("average", "--config", "wu-yang", "--grid", grid) == 2


def test_bad_seed_and_parallel_exit_2():
    assert run("verify", "--config", "free-particle", "--seed", -1) == 2
    assert run("verify", "--config", "free-particle", "--parallel", 0) == 2


def test_simulation_at_singularity_exits_3(tmp_path):
    cfg = load_config("wu-yang")
    cfg["simulation"]["initial"]["q"] = [0.0, 0.0, 0.0]
    path = tmp_path / "origin.json"
    path.write_text(json.dumps(cfg))
    assert run("simulate", "--config", path, "--out", tmp_path / "t.csv") == 3


def test_dimension_mismatch_exits_2(tmp_path):
    cfg = load_config("free-particle")
    cfg["simulation"]["initial"]["q"] = [0.0, 1.0]
    path = tmp_path / "dims.json"
    path.write_text(json.dumps(cfg))
    assert run("simulate", "--config", path) == 2
