import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from distatt.cli import main
from distatt.scenario import load_scenario, pyramid_preset, scenarios_equal

ROOT = Path(__file__).resolve().parents[1]
PYRAMID_JSON = str(ROOT / "scenarios" / "pyramid.json")
STAR_JSON = str(ROOT / "scenarios" / "star_synthesized.json")


def test_simulate_writes_outputs(tmp_path, capsys):
    rc = main(["simulate", PYRAMID_JSON, "--out", str(tmp_path), "--t-end", "0.2"])
    assert rc == 0
    for name in ("log.csv", "jumps.csv", "summary.json", "rbar.svg", "xi.svg", "ptilde.svg", "e_norm.svg"):
        assert (tmp_path / name).is_file()
    header = (tmp_path / "log.csv").read_text().splitlines()[0].split(",")
    assert header[:2] == ["t", "j"] and header[-1] == "e_norm"
    assert header[2:6] == ["rbar_1", "rbar_2", "rbar_3", "rbar_4"]
    assert "U_T" in header and "V_T" in header and "ptilde_5" in header
    log = np.loadtxt(tmp_path / "log.csv", delimiter=",", skiprows=1)
    # 200 steps, the initial row and one jump row at t = 0
    assert log.shape == (202, len(header))
    assert log[0, 0] == log[1, 0] == 0.0 and log[1, 1] == 1.0
    jumps = (tmp_path / "jumps.csv").read_text().splitlines()
    assert jumps[0] == "t,j,edges,UT_before,UT_after"
    assert jumps[1].startswith("0,1,1;2;3;4,")
    s = json.loads((tmp_path / "summary.json").read_text())
    assert s["jumps"] == 1 and s["jump_bound"] >= 1
    assert s["U_T0"] == pytest.approx(4 * 27.14)
    assert "Munthe-Kaas" in s["integrator"]
    assert s["n_steps"] == 200 and s["dt"] == pytest.approx(1e-3)
    assert "[pyramid/hybrid]" in capsys.readouterr().out


def test_simulate_several_scenarios(tmp_path):
    rc = main(["simulate", PYRAMID_JSON, STAR_JSON, "--out", str(tmp_path), "--t-end", "0.1", "--no-plots", "--jobs", "2"])
    assert rc == 0
    assert (tmp_path / "01_pyramid" / "log.csv").is_file()
    assert (tmp_path / "02_star_synthesized" / "summary.json").is_file()
    assert not list(tmp_path.rglob("*.svg"))


def test_simulate_continuous_observer(tmp_path):
    rc = main(["simulate", PYRAMID_JSON, "--out", str(tmp_path), "--t-end", "0.1", "--no-plots", "--observer", "continuous"])
    assert rc == 0
    s = json.loads((tmp_path / "summary.json").read_text())
    assert s["observer"] == "continuous" and s["jumps"] == 0 and "jump_bound" not in s
    assert (tmp_path / "jumps.csv").read_text() == "t,j,edges,UT_before,UT_after\n"


def test_missing_file_exit_code(tmp_path, capsys):
    rc = main(["simulate", str(tmp_path / "nope.json"), "--out", str(tmp_path)])
    assert rc == 2
    err = capsys.readouterr().err
    assert err.startswith("distatt: error:") and "nope.json" in err


def test_invalid_scenario_exit_code(tmp_path, capsys):
    d = pyramid_preset().to_dict()
    del d["graph"]["edges"]
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(d))
    assert main(["check-params", str(path)]) == 2
    assert "graph.edges: missing required field" in capsys.readouterr().err


def test_replicate_short(tmp_path, capsys):
    rc = main(["replicate-paper", "--out", str(tmp_path), "--t-end", "0.2", "--no-plots", "--jobs", "2"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "single event at t = 0 on all edges: yes" in out
    assert (tmp_path / "hybrid" / "log.csv").is_file() and (tmp_path / "continuous" / "log.csv").is_file()


def test_check_params(capsys, tmp_path):
    assert main(["check-params", PYRAMID_JSON]) == 0
    assert "overall: PASS" in capsys.readouterr().out
    d = pyramid_preset().to_dict()
    d["params"]["gamma"] = 3.0
    path = tmp_path / "g.json"
    path.write_text(json.dumps(d))
    assert main(["check-params", str(path)]) == 1
    assert "[FAIL] gamma < 4 Delta*/pi^2" in capsys.readouterr().out


def test_gradcheck(capsys):
    assert main(["gradcheck", "--samples", "20"]) == 0
    assert "max relative error" in capsys.readouterr().out
    assert main(["gradcheck", "--samples", "5", "--tol", "1e-30"]) == 1


def test_check_bpe(capsys):
    assert main(["check-bpe", PYRAMID_JSON, "--window", "12", "--t-end", "24", "--dt", "0.01", "--windows", "5"]) == 0
    out = capsys.readouterr().out
    mu = float(out.split("largest certified mu = ")[1].split()[0])
    assert 6.0 - 0.011 <= mu <= 6.0 + 1e-9
    assert main(["check-bpe", PYRAMID_JSON, "--window", "12", "--mu", "7", "--t-end", "24", "--dt", "0.01"]) == 1
    assert "BPE FAIL" in capsys.readouterr().out


def test_write_preset(tmp_path):
    path = tmp_path / "p.json"
    assert main(["write-preset", str(path)]) == 0
    assert scenarios_equal(load_scenario(path), pyramid_preset())


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "distatt", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for cmd in ("simulate", "replicate-paper", "check-params", "gradcheck", "check-bpe"):
        assert cmd in out.stdout
