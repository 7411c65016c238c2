"""Acceptance suite: one test (and one printed PASS/FAIL line) per criterion.

Runs the shipped configuration; takes one to two minutes on one core.
"""

from __future__ import annotations

import time

import pytest

from magreen import acceptance

NUMBERS = list(range(1, 12))


@pytest.fixture(scope="module")
def results():
    cfg = acceptance.load_config()
    ctx = acceptance.Context(cfg)
    out = {}
    t0 = time.perf_counter()
    for i, fn in enumerate(acceptance.CRITERIA, start=1):
        out[i] = acceptance._guarded(fn, ctx)
    out[11] = acceptance.c11_budget(cfg, list(out.values()), time.perf_counter() - t0)
    return out


NAMES = {
    1: "solver_radial_oracle",
    2: "green_closed_forms",
    3: "fixed_density_exponents",
    4: "doubling_ratio_flatness",
    5: "gradient_integrability",
    6: "integral_identities",
    7: "capacity",
    8: "reciprocity",
    9: "distribution_decay",
    10: "removable_singularity",
    11: "runtime_and_determinism",
}


@pytest.mark.slow
@pytest.mark.parametrize("number", NUMBERS, ids=[f"{n:02d}_{NAMES[n]}" for n in NUMBERS])
def test_criterion(results, number, capsys):
    res = results[number]
    with capsys.disabled():
        print("\n" + res.line())
    assert res.passed, res.line()
