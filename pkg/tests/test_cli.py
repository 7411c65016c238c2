from __future__ import annotations

import csv
import json

import pytest

from magreen.cli import main


@pytest.fixture(scope="module")
def state_file(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    p = d / "state.bin"
    assert main(["solve", "--domain", "disk:1.0", "--f", "1.0", "--h", "0.03125", "--out", str(p)]) == 0
    return p


def test_solve_writes_sidecar(state_file):
    side = json.loads(state_file.with_suffix(".json").read_text())
    assert set(side) == {"residual", "newton_iters", "min_hessian_eig"}
    assert side["min_hessian_eig"] > 0


def test_sections_csv(state_file, tmp_path):
    out = tmp_path / "s.csv"
    assert main(["sections", "--state", str(state_file), "--x0", "0,0", "--heights", "0.02,0.04,0.08",
                 "--alpha", "0.5", "--csv", str(out)]) == 0
    rows = list(csv.reader(open(out)))
    assert rows[0][:5] == ["t", "volume", "mu", "com_x", "com_y"]
    assert len(rows) == 4


def test_green_and_capacity(state_file, tmp_path, capsys):
    g = tmp_path / "g.bin"
    assert main(["green", "--state", str(state_file), "--V", "disk:0.8", "--x0", "0,0", "--out", str(g)]) == 0
    assert g.exists()
    capsys.readouterr()
    code = main(["capacity", "--state", str(state_file), "--K", "section:x0=0,0:t=0.02", "--V", "disk:0.8",
                 "--check", "reciprocity", "--heights", "0.02,0.04"])
    out = json.loads(capsys.readouterr().out)
    assert code == 0
    assert {"cap", "q_form", "sandwich_lo", "sandwich_hi"} <= set(out)


def test_verify_identities(state_file, tmp_path):
    out = tmp_path / "id.csv"
    assert main(["verify", "--suite", "identities", "--state", str(state_file), "--heights", "0.1",
                 "--csv", str(out)]) == 0
    assert out.read_text().splitlines()[0] == "name,h,left,right,rel_err,pass"


def test_verify_fit(state_file, tmp_path, capsys):
    code = main(["verify", "--mode", "thm1i", "--state", str(state_file), "--V", "disk:0.8",
                 "--heights", "0.005,0.01,0.02,0.04", "--csv", str(tmp_path / "r.csv")])
    rep = json.loads(capsys.readouterr().out)
    assert code == 0 and rep["model"] == "linear"


def test_configuration_error_exit_code(tmp_path):
    assert main(["solve", "--domain", "hexagon:1", "--f", "1", "--h", "0.1", "--out", str(tmp_path / "x")]) == 2
    assert main(["solve", "--domain", "disk:1", "--f", "1", "--h", "0.5", "--out", str(tmp_path / "x")]) == 2


def test_solver_failure_exit_code(tmp_path, monkeypatch):
    from magreen import solver
    from magreen.errors import SolverFailureError

    def fail(*a, **k):
        raise SolverFailureError("stalled", 1.0)

    monkeypatch.setattr(solver, "solve_monge_ampere", fail)
    assert main(["solve", "--domain", "disk:1", "--f", "1", "--h", "0.05", "--out", str(tmp_path / "x")]) == 3


def test_sweep(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text(f'domain = "disk:1.0"\ndensity = "1.0"\nh_list = [0.0625]\nheights = [0.05]\n'
                   f'output_dir = "{tmp_path / "o"}"\n')
    assert main(["sweep", "--config", str(cfg)]) == 0
    assert (tmp_path / "o" / "summary.json").exists()
    bad = tmp_path / "bad.toml"
    bad.write_text('domain = "disk:1.0"\ndensity = "1.0"\nh_list = [0.0625]\nheights = []\n')
    assert main(["sweep", "--config", str(bad)]) == 2
