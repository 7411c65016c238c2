from __future__ import annotations

import json

import pytest

from magreen import harness
from magreen.errors import ConfigurationError, SolverFailureError
from magreen.harness import ExperimentConfig, convergence_sweep, run_suite


def _cfg(tmp_path, **kw):
    base = dict(domain="disk:1.0", density="1.0", h_list=[0.0625, 0.03125], heights=[0.05, 0.1],
                suites=["solve", "sections"], output_dir=str(tmp_path / "out"))
    base.update(kw)
    return ExperimentConfig(**base)


@pytest.mark.parametrize("field,value", [("heights", []), ("h_list", [0.03, 0.06]), ("h_list", []),
                                         ("suites", ["nope"]), ("domain", "hexagon:1"), ("density", "import os"),
                                         ("poles", [(0.0, 0.0, 0.0)]), ("tolerances", {"bogus": 1.0})])
def test_invalid_config_names_field(tmp_path, field, value):
    with pytest.raises(ConfigurationError, match=field.split("_")[0]):
        _cfg(tmp_path, **{field: value})


def test_from_toml_with_overrides(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text('domain = "disk:1.0"\ndensity = "1.0"\nh_list = [0.0625]\nheights = [0.05]\n')
    cfg = ExperimentConfig.from_toml(p, {"h_list": [0.125, 0.0625], "seed": None})
    assert cfg.h_list == [0.125, 0.0625] and cfg.seed == 0
    p.write_text('domain = "disk:1.0"\ndensity = "1.0"\nh_list = [0.0625]\nheights = [0.05]\ncolour = 1\n')
    with pytest.raises(ConfigurationError, match="colour"):
        ExperimentConfig.from_toml(p)


def test_run_writes_csv_and_deterministic_summary(tmp_path):
    kw = dict(suites=["solve", "sections", "identities"], h_list=[0.03125, 0.015625], heights=[0.1, 0.2])
    c1 = _cfg(tmp_path, output_dir=str(tmp_path / "a"), **kw)
    c2 = _cfg(tmp_path, output_dir=str(tmp_path / "b"), **kw)
    code, summary = run_suite(c1)
    run_suite(c2)
    assert code == 0 and summary["passed"]
    a = (tmp_path / "a" / "summary.json").read_bytes()
    assert a == (tmp_path / "b" / "summary.json").read_bytes()
    assert b"seconds" not in a
    for s in ("solve", "sections", "identities"):
        assert (tmp_path / "a" / f"{s}.csv").exists()
    assert (tmp_path / "a" / "identities.csv").read_text().splitlines()[0].startswith("name,h,left,right,rel_err,pass")


def test_output_root_env(tmp_path, monkeypatch):
    monkeypatch.setenv(harness.OUTPUT_ROOT_ENV, str(tmp_path / "root"))
    cfg = _cfg(tmp_path, output_dir="rel", suites=["solve"])
    run_suite(cfg)
    assert (tmp_path / "root" / "rel" / "summary.json").exists()


def test_crash_isolation(tmp_path, monkeypatch):
    def boom(*a):
        raise RuntimeError("kaboom")

    monkeypatch.setitem(harness._RUNNERS, "sections", boom)
    code, summary = run_suite(_cfg(tmp_path))
    assert code == 1
    assert summary["suites"]["solve"]["passed"]
    assert summary["suites"]["sections"]["failures"] == 2
    assert "kaboom" in summary["suites"]["sections"]["rows"][0]["error"]


def test_solver_failure_exit_code(tmp_path, monkeypatch):
    def fail(cfg, h):
        raise SolverFailureError("no convergence", 1.0)

    monkeypatch.setattr(harness, "_solve", fail)
    code, summary = run_suite(_cfg(tmp_path))
    assert code == 3 and not summary["passed"]


def test_convergence_sweep_orders(tmp_path):
    cfg = _cfg(tmp_path, density="(1 + x*x + y*y)*exp(x*x + y*y)", lam=1.0, Lam=5.5,
               exact_u="exp((x*x + y*y)/2) - exp(0.5)", h_list=[0.0625, 0.03125, 0.015625], suites=["solve"])
    table, code = convergence_sweep(cfg)
    assert code == 0
    assert min(table["ma_max_error"]["orders"]) >= 1.7
    data = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert "convergence" in data


def test_convergence_needs_three_spacings(tmp_path):
    with pytest.raises(ConfigurationError):
        convergence_sweep(_cfg(tmp_path))


def test_parallel_workers_match_serial(tmp_path):
    c1 = _cfg(tmp_path, output_dir=str(tmp_path / "s"))
    c2 = _cfg(tmp_path, output_dir=str(tmp_path / "p"), workers=2)
    run_suite(c1)
    run_suite(c2)
    s = json.loads((tmp_path / "s" / "summary.json").read_text())
    p = json.loads((tmp_path / "p" / "summary.json").read_text())
    assert s["suites"] == p["suites"]


def test_under_resolved_identity_is_recorded(tmp_path):
    code, summary = run_suite(_cfg(tmp_path, suites=["identities"], h_list=[0.0625], heights=[0.05]))
    assert code == 1
    assert "under-resolved" in summary["suites"]["identities"]["rows"][0]["error"]
