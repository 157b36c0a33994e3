import json
import subprocess
import sys

import pytest

from expstab.cli import CONFIG_SCHEMA, main, validate_config
from expstab.errors import ConfigError


@pytest.fixture
def out(tmp_path, monkeypatch):
    d = tmp_path / "out"
    monkeypatch.setenv("EXPSTAB_OUT", str(d))
    return d


def read(path):
    return json.loads(path.read_text())


def test_analyze_feasible(out):
    assert main(["analyze", "--preset", "example1", "--h", "1", "--mu", "0", "--k", "1.0"]) == 0
    res = read(out / "analyze.json")
    assert res["report"]["status"] == "feasible"
    assert res["decision_variables"] == 105
    assert res["overshoot"]["H"] >= 1
    man = read(out / "analyze.manifest.json")
    assert man["exit_code"] == 0 and man["outputs"] == ["analyze.json"]


def test_analyze_infeasible(out):
    assert main(["analyze", "--preset", "example1", "--h", "1", "--mu", "0", "--k", "1.4"]) == 1
    assert read(out / "analyze.json")["overshoot"] is None


def test_outputs_are_reproducible(tmp_path):
    argv = ["analyze", "--preset", "example1", "--h", "1", "--mu", "0.5", "--k", "0.5"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(argv + ["--out", str(a)]) == 0
    assert main(argv + ["--out", str(b)]) == 0
    assert (a / "analyze.json").read_bytes() == (b / "analyze.json").read_bytes()


@pytest.mark.parametrize("argv", [
    ["analyze", "--preset", "example1", "--h", "1", "--mu", "1.2", "--k", "1"],
    ["analyze", "--preset", "example1", "--h", "1", "--mu", "0"],
    ["analyze", "--h", "1", "--mu", "0", "--k", "1"],
    ["analyze", "--preset", "example9"],
    ["frobnicate"],
    ["simulate", "--preset", "example1", "--h", "1", "--z0", "1,2,3"],
    ["simulate", "--preset", "example1", "--h", "0.001", "--z0", "1,1", "--dt", "0.01"],
    ["search", "--preset", "example1", "--mu", "0", "--k", "1", "--lo", "3", "--hi", "2"],
])
def test_usage_and_config_errors_leave_nothing_behind(out, argv):
    assert main(argv) == 64
    assert not out.exists() or not any(out.iterdir())


def test_config_file_errors(out, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"model": {"preset": "example1"}, "params": {"h": -1}}')
    assert main(["analyze", "--config", str(bad)]) == 64
    bad.write_text("{not json")
    assert main(["analyze", "--config", str(bad)]) == 64
    assert main(["analyze", "--config", str(tmp_path / "missing.json")]) == 64


def test_dimension_errors_are_reported_with_paths():
    cfg = {"model": {"n": 2, "A": [1, 0, 0], "B": [0, 0, 0, 0], "C": [1, 1], "L": [1, 1]}}
    with pytest.raises(ConfigError, match=r"\$\.model\.A"):
        validate_config(cfg)
    assert CONFIG_SCHEMA["$schema"].endswith("2020-12/schema")


def test_config_file_model(out, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({
        "model": {"n": 1, "A": [-0.5], "B": [0.2], "C": [1.0], "L": [1.0]},
        "params": {"h": 1.0, "mu": 0.0, "k": 0.1},
    }))
    assert main(["analyze", "--config", str(cfg)]) == 0


def test_simulate_negative_initial_state(out):
    code = main(["simulate", "--preset", "example1", "--h", "1", "--z0", "-1,1", "--t-end", "2", "--dt", "0.01"])
    assert code == 0
    lines = (out / "trajectory.csv").read_text().splitlines()
    assert lines[0] == "t,z_1,z_2,norm,h"
    assert lines[1].split(",")[1:3] == ["-1", "1"]
    assert len(lines) == 202
    assert read(out / "trajectory.json")["z0"] == [-1.0, 1.0]


def test_simulate_preset_defaults(out):
    assert main(["simulate", "--preset", "example3", "--t-end", "1", "--every", "10"]) == 0
    meta = read(out / "trajectory.json")
    assert meta["delay"]["amplitude"] > 0 and len(meta["z0"]) == 2


def test_search_max_rate(out):
    code = main(["search", "--preset", "example1", "--mode", "max-rate", "--h", "1", "--mu", "0",
                 "--tol", "0.02", "--no-post-scan"])
    assert code == 0
    res = read(out / "search.json")["result"]
    assert 1.1 < res["optimum"] < 1.3
    probes = (out / "search_probes.csv").read_text().splitlines()
    assert probes[0] == "value,status,margin,stage" and len(probes) > 3


def test_search_infeasible_at_lower_end(out):
    code = main(["search", "--preset", "example1", "--mode", "max-rate", "--h", "1", "--mu", "0",
                 "--lo", "1.5", "--hi", "1.9"])
    assert code == 1
    assert not out.exists() or not any(out.iterdir())


def test_verify_inequalities(out):
    assert main(["verify-inequalities", "--seed", "7", "--count", "25"]) == 0
    assert read(out / "verify.json")["violations"] == 0


@pytest.mark.slow
def test_verify_inequalities_full(out):
    assert main(["verify-inequalities", "--seed", "7", "--count", "1000"]) == 0


def test_out_flag_beats_environment(out, tmp_path):
    other = tmp_path / "other"
    main(["verify-inequalities", "--count", "2", "--out", str(other)])
    assert (other / "verify.json").exists() and not out.exists()


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "expstab", "verify-inequalities", "--count", "1",
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["violations"] == 0
    assert subprocess.run([sys.executable, "-m", "expstab"], capture_output=True).returncode == 64
