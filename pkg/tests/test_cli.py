import json
import subprocess
import sys

import numpy as np
import pytest

from veclyap.cli import run

NETWORK_HEADER = ("t,x1,x2,x3,x4,x5,x6,x7,x8,x9,u1,u2,u3,"
                  "y1,y2,y3,V1,V2,V3,V4,V5,V6")


def _row(out, name):
    for line in out.splitlines():
        if line.startswith(name + " ") or line.startswith(name + "  "):
            return line
    raise AssertionError(f"no table row for {name!r} in:\n{out}")


def test_list_scenarios(capsys):
    assert run(["list-scenarios"]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0].startswith("scenario")
    ex = _row(out, "example1").split()
    assert ex[1:4] == ["3", "1", "3"]
    assert "kappa=33" in _row(out, "example1")
    net = _row(out, "lorenz-network").split()
    assert net[1:4] == ["9", "3", "3"]
    assert "k=30" in _row(out, "lorenz-network")


def test_simulate_network_writes_csv(tmp_path, capsys):
    out_csv = tmp_path / "traj.csv"
    rc = run(["simulate", "--scenario", "lorenz-network",
              "--T", "10", "--dt", "0.001", "--out", str(out_csv)])
    assert rc == 0
    msg = capsys.readouterr().out
    assert "scenario lorenz-network: 10001 samples over T=10 (rk4)" in msg
    assert "|x(T)| = 1.329554e-02" in msg
    lines = out_csv.read_text().splitlines()
    assert len(lines) == 10002
    assert lines[0] == NETWORK_HEADER


def test_simulate_rk45_uniform_grid(tmp_path, capsys):
    out_csv = tmp_path / "traj45.csv"
    rc = run(["simulate", "--scenario", "example1", "--method", "rk45",
              "--T", "20", "--dt", "0.01", "--out", str(out_csv)])
    assert rc == 0
    msg = capsys.readouterr().out
    assert "adaptive steps: 364 accepted, 2 rejected" in msg
    lines = out_csv.read_text().splitlines()
    assert len(lines) == 2002           # header + uniform 0.01 grid over [0,20]
    assert lines[0] == "t,x1,x2,x3,u1,y1,y2,y3,V1,V2,V3"


def test_simulate_unknown_scenario(capsys):
    assert run(["simulate", "--scenario", "nope", "--T", "1"]) == 2
    assert "unknown scenario" in capsys.readouterr().err


def test_sigma_rejected_for_user_law_scenario(capsys):
    rc = run(["simulate", "--scenario", "example1", "--sigma", "zero",
              "--T", "0.01"])
    assert rc == 2
    assert "user-supplied" in capsys.readouterr().err


def test_plot_needs_out(tmp_path, capsys):
    assert run(["simulate", "--scenario", "example1", "--T", "0.01",
                "--plot"]) == 2
    out_csv = tmp_path / "t.csv"
    rc = run(["simulate", "--scenario", "example1", "--T", "0.1",
              "--out", str(out_csv), "--plot"])
    assert rc == 0
    assert out_csv.exists()
    assert (tmp_path / "t_states.png").stat().st_size > 0


def test_check_matrix_lines(capsys):
    assert run(["check-matrix", "--scenario", "example1"]) == 0
    assert capsys.readouterr().out.strip() == \
        "Metzler: true, M-matrix(-Lambda): true, Hurwitz: true"
    assert run(["check-matrix", "--scenario", "lorenz-network"]) == 1
    assert capsys.readouterr().out.strip() == \
        "Metzler: true, M-matrix(-Lambda): false, Hurwitz: false"


def test_synthesize_default_gain_fails_preconditions(capsys):
    rc = run(["synthesize", "--scenario", "lorenz-network"])
    assert rc == 1
    out = capsys.readouterr().out
    assert "comparison_stable: FAIL" in out
    assert "dissipation_split: PASS" in out
    assert "synthesis preconditions: FAIL" in out


def test_synthesize_certified_gain_payload(tmp_path, capsys):
    out_json = tmp_path / "ctrl.json"
    rc = run(["synthesize", "--scenario", "lorenz-network", "--k", "362",
              "--sigma", "sontag", "--out", str(out_json)])
    assert rc == 0
    assert "synthesis preconditions: PASS" in capsys.readouterr().out
    payload = json.loads(out_json.read_text())
    assert payload["preconditions_pass"] is True
    assert payload["scenario"] == "lorenz-network"
    assert payload["sigma"] == "sontag"
    assert payload["parameters"]["k"] == 362.0
    assert payload["controller"]["kind"] == "synthesized"
    assert set(payload["checks"]) == {"comparison_stable", "dissipation_split",
                                      "internal_rate_bound", "supply_bias_sign"}
    assert all(c["passed"] for c in payload["checks"].values())
    assert np.allclose(payload["gain_bounds"], 360.236226629351, rtol=1e-12)


def test_verify_cascade_outputs(tmp_path, capsys):
    out_csv = tmp_path / "run.csv"
    report = tmp_path / "report.json"
    rc = run(["verify", "--scenario", "example1",
              "--out", str(out_csv), "--report", str(report)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "overall: PASS" in out
    assert len(out_csv.read_text().splitlines()) == 20002
    doc = json.loads(report.read_text())
    assert doc["overall"] is True
    assert [c["name"] for c in doc["checks"]] == [
        "convergence", "dissipation_monitor", "domination",
        "comparison_metzler", "comparison_hurwitz"]
    assert (tmp_path / "report_states.png").stat().st_size > 0
    assert (tmp_path / "report_domination.png").stat().st_size > 0


def test_verify_network_fails_honestly(tmp_path, capsys):
    report = tmp_path / "net.json"
    rc = run(["verify", "--scenario", "lorenz-network",
              "--report", str(report), "--no-figures"])
    assert rc == 1
    out = capsys.readouterr().out
    assert "convergence: FAIL" in out
    assert "comparison_hurwitz: FAIL" in out
    assert "dissipation_monitor: PASS" in out
    assert "overall: FAIL" in out
    assert not (tmp_path / "net_states.png").exists()


def test_config_plain_spec(tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"name": "example1",
                                "parameters": {"kappa": 35.0},
                                "horizon": {"T": 0.01}}))
    rc = run(["simulate", "--config", str(spec)])
    assert rc == 0
    assert "scenario example1: 11 samples" in capsys.readouterr().out


def test_config_base_variant(tmp_path, capsys):
    spec = tmp_path / "soft.json"
    spec.write_text(json.dumps({"name": "lorenz-soft",
                                "base": "lorenz-network",
                                "parameters": {"k": 200.0},
                                "horizon": {"T": 1.0}}))
    rc = run(["list-scenarios", "--config", str(spec)])
    assert rc == 0
    assert "lorenz-soft" in capsys.readouterr().out
    rc = run(["simulate", "--config", str(spec)])
    assert rc == 0
    assert "scenario lorenz-soft: 1001 samples" in capsys.readouterr().out


def test_config_unknown_key_rejected(tmp_path, capsys):
    spec = tmp_path / "bad.json"
    spec.write_text(json.dumps({"name": "example1", "gain": 5.0}))
    assert run(["simulate", "--config", str(spec)]) == 2
    assert "unknown run spec keys" in capsys.readouterr().err


def test_seed_resolution(tmp_path, monkeypatch):
    out_json = tmp_path / "seeded.json"
    monkeypatch.setenv("CVLF_SEED", "3")
    rc = run(["synthesize", "--scenario", "lorenz-network", "--k", "362",
              "--out", str(out_json)])
    assert rc == 0
    assert json.loads(out_json.read_text())["seed"] == 3
    rc = run(["synthesize", "--scenario", "lorenz-network", "--k", "362",
              "--seed", "5", "--out", str(out_json)])
    assert rc == 0
    assert json.loads(out_json.read_text())["seed"] == 5


def test_console_script_smoke():
    proc = subprocess.run(["veclyap", "list-scenarios"],
                          capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0
    assert "example1" in proc.stdout and "lorenz-network" in proc.stdout
