import csv
import json
import subprocess
import sys

import pytest

from scalewalk.cli import main


def run(tmp_path, *argv):
    return main([str(a) for a in argv])


@pytest.fixture
def env(tmp_path):
    p = tmp_path / "env.json"
    assert run(tmp_path, "gen", "--variant", "grid", "--n", 64, "--law", "uniform:1:2", "--seed", 7, "-o", p) == 0
    return p


def test_gen_writes_environment_and_manifest(env):
    d = json.loads(env.read_text())
    assert d["version"] == 1 and len(d["cells"]) == 64 * 64
    man = json.loads((env.parent / "env.json.manifest.json").read_text())
    assert man["command"] == "gen"
    assert "created" in man and man["seeds"] == {"seed": 7}


def test_gen_missing_flag_is_usage_error(tmp_path, capsys):
    assert run(tmp_path, "gen", "--n", 8, "-o", tmp_path / "x.json") == 2
    assert "usage" in capsys.readouterr().err
    assert run(tmp_path, "gen", "--variant", "grid", "-o", tmp_path / "x.json") == 2
    assert run(tmp_path, "frobnicate") == 2


def test_sigma_csv(tmp_path, env):
    out = tmp_path / "sigma.csv"
    assert run(tmp_path, "sigma", "--env", env, "--walks", 300, "--horizon", 20, "--seed", 1, "-o", out) == 0
    rows = list(csv.DictReader(out.open()))
    for col in ("c_10", "c_01", "rho", "stderr_c_10"):
        assert col in rows[0]
    assert (tmp_path / "sigma.csv.manifest.json").exists()


def test_validate_exit_codes(tmp_path, env):
    assert run(tmp_path, "validate", "--env", env) == 0
    d = json.loads(env.read_text())
    d["edges"].append({"a": 0, "b": 4095, "conductance": 1.0})
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(d))
    assert run(tmp_path, "validate", "--env", bad) == 1
    d["edges"][-1] = {"a": 0, "b": 1, "conductance": -1.0}
    bad.write_text(json.dumps(d))
    assert run(tmp_path, "validate", "--env", bad) == 1


def test_missing_input_is_invalid(tmp_path):
    assert run(tmp_path, "validate", "--env", tmp_path / "nope.json") == 1


def test_walk_trace_export(tmp_path, env):
    out = tmp_path / "w.csv"
    assert run(tmp_path, "walk", "--env", env, "--walks", 2, "--steps", 5, "--seed", 3, "-o", out) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "walk,jump,cell,tau" and len(lines) == 1 + 2 * 6


@pytest.mark.filterwarnings("ignore:.*reached the window frame")
def test_outputs_deterministic(tmp_path):
    outs = []
    for rep in range(2):
        d = tmp_path / str(rep)
        d.mkdir()
        assert run(d, "gen", "--variant", "split_grid", "--k", 3, "-o", d / "e.json") == 0
        assert run(d, "sigma", "--env", d / "e.json", "--start", 0.5, 0.5, "--walks", 200, "--horizon", 0.05,
                   "--seed", 2, "-o", d / "s.csv") == 0
        assert run(d, "energy", "--env", d / "e.json", "--m1", 1, "--j-max", 2, "-o", d / "en.csv") == 0
        outs.append([(d / f).read_bytes() for f in ("e.json", "s.csv", "en.csv")])
    assert outs[0] == outs[1]


def test_thread_count_does_not_change_output(tmp_path, env):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run(tmp_path, "--threads", 1, "sigma", "--env", env, "--walks", 2100, "--horizon", 5, "--seed", 4, "-o", a) == 0
    assert run(tmp_path, "--threads", 3, "sigma", "--env", env, "--walks", 2100, "--horizon", 5, "--seed", 4, "-o", b) == 0
    assert a.read_bytes() == b.read_bytes()


def test_dcmp_command(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    a.write_text("t,x,y\n0,0,0\n1,1,0\n")
    b.write_text("t,x,y\n0,0,1\n1,1,1\n")
    out = tmp_path / "d.csv"
    assert run(tmp_path, "dcmp", a, b, "-o", out) == 0
    row = list(csv.reader(out.open()))
    assert float(row[1][1]) == pytest.approx(1.0, abs=1e-9)


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "scalewalk", "gen"], capture_output=True, text=True)
    assert r.returncode == 2 and "usage" in r.stderr
