from __future__ import annotations

import json
import math
import subprocess
import sys

import pytest

from vortexmf import cli

PI = math.pi


def run(tmp_path, *argv):
    code = cli.main([*argv, "--out", str(tmp_path)])
    art = tmp_path / f"{argv[0]}.json"
    return code, (json.loads(art.read_text()) if art.exists() else None)


def test_cvp_disk_oracle(tmp_path):
    code, art = run(tmp_path, "cvp", "--sigma", "-0.5", "--lambda", str(2 * PI), "--mesh", "disk:1024:log")
    assert code == 0
    assert art["command"] == "cvp"
    assert art["result"]["solution"]["converged"]
    oracle = art["result"]["disk_oracle"]
    assert oracle["gamma2"] == pytest.approx(0.5)
    assert oracle["psi_sup_error"] < 1e-5
    assert (tmp_path / "cvp_psi.csv").exists()


def test_cvp_zero_lambda_gives_uniform_entropy(tmp_path):
    code, art = run(tmp_path, "cvp", "--lambda", "0", "--mesh", "disk:256")
    assert code == 0
    assert art["result"]["solution"]["entropy"] == pytest.approx(math.log(PI), abs=1e-10)


def test_cvp_sweep_writes_curve(tmp_path):
    code, art = run(tmp_path, "cvp", "--sigma", "0", "--lambda-grid", "1:20:4", "--mesh", "disk:256")
    assert code == 0
    lines = (tmp_path / "cvp_curve.csv").read_text().splitlines()
    assert len(lines) == 5
    assert art["result"]["branch_end"] is None


def test_mvp_recovers_multiplier(tmp_path):
    from vortexmf import analytic

    lam = 2 * PI
    energy = analytic.disk_energy(-0.5, lam) + 0.5 * analytic.disk_vortex_moment(-0.5, lam)
    code, art = run(tmp_path, "mvp", "--sigma", "-0.5", "--energy", repr(energy), "--eps", "0",
                    "--mesh", "disk:1024:log")
    assert code == 0
    assert art["result"]["mvp"]["lambda"] == pytest.approx(lam, rel=1e-4)


def test_mvp_below_uniform_energy_exits_2(tmp_path):
    code, art = run(tmp_path, "mvp", "--sigma", "0", "--energy", "0.001", "--eps", "0", "--mesh", "disk:256")
    assert code == 2
    assert art["result"]["mvp"]["status"] == "below_e0"


def test_configuration_errors_exit_1(tmp_path):
    assert cli.main(["cvp", "--out", str(tmp_path)]) == 1
    assert cli.main(["cvp", "--lambda", "1", "--mesh", "hex:3", "--out", str(tmp_path)]) == 1
    assert cli.main(["mvp", "--energy", "0.1", "--eps", "1e-4", "--mesh", "disk:64", "--out", str(tmp_path)]) == 1
    assert cli.main(["validate", "--only", "nope", "--out", str(tmp_path)]) == 1
    assert cli.main(["cvp", "--threads", "0", "--lambda", "1", "--out", str(tmp_path)]) == 1
    assert cli.main(["frobnicate"]) == 1


def test_config_precedence(tmp_path):
    cfg = tmp_path / "conf.yaml"
    cfg.write_text("sigma: -0.5\ncvp:\n  lambda: 3.0\n  mesh: disk:128\n")
    out = tmp_path / "a"
    code, art = run(out, "cvp", "--config", str(cfg), "--lambda", "4.0")
    assert code == 0
    assert art["config"]["sigma"] == -0.5
    assert art["config"]["lam"] == 4.0
    assert art["config"]["mesh"] == "disk:128"
    assert str(cfg) in art["inputs"]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"cvp": {"colour": "blue"}}))
    assert cli.main(["cvp", "--config", str(bad), "--out", str(tmp_path / "b")]) == 1


def test_artifacts_are_deterministic(tmp_path):
    args = ("bubble", "--alpha", "0.5", "--t0", "0.5")
    _, a = run(tmp_path / "one", *args)
    _, b = run(tmp_path / "two", *args)
    for art in (a, b):
        art.pop("wall_time")
        art["config"].pop("out")
    assert a == b
    assert a["result"]["mass_check"]["ok"]


def test_diagnose_planted_and_manifest(tmp_path):
    code, art = run(tmp_path, "diagnose", "--plant", "I", "--sigma", "0.1")
    assert code == 0
    assert art["result"]["report"]["label"] == "I"
    manifest = tmp_path / "family" / "manifest.json"
    code, art = run(tmp_path / "again", "diagnose", "--family", str(manifest))
    assert code == 0
    assert art["result"]["report"]["label"] == "I"
    assert str(manifest) in art["inputs"]
    empty = tmp_path / "empty.json"
    empty.write_text(json.dumps({"sigma": 0.1, "members": []}))
    assert cli.main(["diagnose", "--family", str(empty), "--out", str(tmp_path / "c")]) == 1


def test_mesh_and_validate_subset(tmp_path):
    code, art = run(tmp_path, "mesh", "--mesh", "grid:0.125")
    assert code == 0
    assert art["result"]["mesh"]["kind"] == "grid-2d"
    code, art = run(tmp_path, "validate", "--only", "closed-forms,bubbles")
    assert code == 0
    assert art["result"]["all_passed"]
    assert [c["number"] for c in art["result"]["criteria"]] == [2, 9]


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "vortexmf", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.startswith("vortexmf ")
