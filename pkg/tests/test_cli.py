import json
import os
import subprocess
import sys

import pytest

from obsvkit.cli import main


def _run(tmp_path, *args, name="report.json"):
    out = tmp_path / name
    code = main([*args, "--out", str(out)])
    report = json.loads(out.read_text(), parse_constant=lambda c: pytest.fail(f"non-finite {c}"))
    return code, report


def _strip_duration(report):
    report = dict(report)
    report.pop("duration_s")
    return report


def test_analyze_vins(tmp_path, capsys):
    code, rep = _run(tmp_path, "analyze", "--system", "vins", "--features", "2", "--trials", "3", "--seed", "42")
    assert code == 0 and rep["passed"]
    assert [t["null_dim"] for t in rep["trials"]] == [4, 4, 4]
    assert rep["config"]["mode"] == "vins" and rep["config"]["seed"] == 42
    assert "check_tol" in rep["config"]["tolerances"]
    assert "analyze: PASS" in capsys.readouterr().out
    assert [p.name for p in tmp_path.iterdir()] == ["report.json"]


def test_reports_are_reproducible(tmp_path):
    args = ("analyze", "--system", "lins", "--features", "1", "--trials", "2", "--seed", "7")
    _, a = _run(tmp_path, *args, name="a.json")
    _, b = _run(tmp_path, *args, name="b.json")
    assert _strip_duration(a) == _strip_duration(b)


def test_degenerate_run_is_informational(tmp_path):
    code, rep = _run(tmp_path, "analyze", "--system", "vins", "--features", "2", "--trials", "2",
                     "--degeneracy", "collinear_features")
    assert code == 0 and rep["informational"]
    assert rep["summary"]["hypothesis_violations"] == 2
    assert all(t["checks"]["G_J_annihilate_null"]["status"] == "hypothesis_violation" for t in rep["trials"])


def test_failing_check_exits_one(tmp_path):
    code, rep = _run(tmp_path, "analyze", "--system", "vins", "--features", "2", "--trials", "1",
                     "--tol-override", "gap_tol=0")
    assert code == 1 and not rep["passed"]


@pytest.mark.parametrize("argv", [
    ["analyze", "--system", "vins", "--features", "1"],
    ["analyze", "--system", "vins", "--features", "2", "--tol-override", "nonsense=1"],
    ["analyze", "--system", "vins", "--features", "2", "--tol-override", "gap_tol"],
    ["analyze", "--system", "radar", "--features", "2"],
    ["analyze", "--system", "vins", "--features", "2", "--trials", "0"],
    ["verify", "flow", "--dt", "-1"],
])
def test_invalid_configuration_exits_two(argv, capsys):
    assert main(argv) == 2


def test_seed_environment_default(tmp_path, monkeypatch):
    monkeypatch.setenv("OBSVKIT_SEED", "99")
    code, rep = _run(tmp_path, "verify", "identities", "--trials", "5")
    assert code == 0 and rep["config"]["seed"] == 99
    monkeypatch.setenv("OBSVKIT_SEED", "ninety")
    assert main(["verify", "identities", "--trials", "5"]) == 2


def test_verify_batteries(tmp_path):
    code, rep = _run(tmp_path, "verify", "gradients", "--trials", "2", "--seed", "1", name="g.json")
    assert code == 0 and rep["summary"]["max_residual"] <= 1e-5
    code, rep = _run(tmp_path, "verify", "identities", "--trials", "50", name="i.json")
    assert code == 0
    code, rep = _run(tmp_path, "verify", "brackets", "--trials", "3", "--seed", "3", name="b.json")
    assert code == 0 and rep["summary"]["mutation_detected"]
    code, rep = _run(tmp_path, "verify", "flow", "--trials", "2", "--duration", "0.2", "--dt", "2e-3", name="f.json")
    assert code == 0 and rep["config"]["dt"] == 2e-3


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "obsvkit", "--version"], capture_output=True, text=True,
                         env={**os.environ})
    assert out.returncode == 0 and "obsvkit" in out.stdout
