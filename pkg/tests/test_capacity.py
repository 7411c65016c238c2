from __future__ import annotations

import math

import numpy as np
import pytest

from magreen.capacity import (
    admissible_energy,
    capacity,
    cutoff_energy_2d,
    cutoff_energy_3d,
    gamma_2d,
    gamma_3d,
    level_set_capacity,
    reciprocity_check,
)
from magreen.errors import DomainError, ParameterError
from magreen.green import green_for_state
from magreen.grid import Region
from magreen.operator import assemble_operator


@pytest.fixture(scope="module")
def annulus2(quad2):
    V = Region.ball(quad2.grid, 0.8)
    return assemble_operator(quad2, V), V


def test_annulus_capacity_2d(quad2, annulus2):
    op, V = annulus2
    res = capacity(op, Region.ball(quad2.grid, 0.2), V)
    assert res.value == pytest.approx(2 * math.pi / math.log(4), rel=0.03)
    assert res.flux == pytest.approx(res.value, rel=1e-8)
    assert res.minimal
    assert sum(res.breakdown.values()) == pytest.approx(res.value)


def test_annulus_capacity_3d(quad3):
    V = Region.ball(quad3.grid, 0.8)
    res = capacity(assemble_operator(quad3, V), Region.ball(quad3.grid, 0.2), V, perturbations=0)
    assert res.value == pytest.approx(4 * math.pi / 3.75, rel=0.05)


def test_capacity_monotone_in_K(quad2, annulus2):
    op, V = annulus2
    caps = [capacity(op, Region.ball(quad2.grid, r), V, perturbations=0).value for r in (0.1, 0.2, 0.4)]
    assert caps[0] < caps[1] < caps[2]


def test_capacity_errors(quad2, annulus2):
    op, V = annulus2
    empty = Region(quad2.grid, np.zeros(quad2.grid.shape, bool), np.ones(quad2.grid.shape))
    with pytest.raises(ParameterError):
        capacity(op, empty, V)
    with pytest.raises(DomainError):
        capacity(op, Region.ball(quad2.grid, 0.9), V)


def test_cutoff_functions_endpoints():
    t = 0.01
    assert gamma_3d(t, t) == 1 and gamma_3d(2 * t, t) == 0
    assert gamma_2d(t, t) == pytest.approx(1) and gamma_2d(math.sqrt(t), t) == pytest.approx(0)


def test_admissible_energy_dominates_capacity(quad2, annulus2):
    op, V = annulus2
    K = Region.ball(quad2.grid, 0.2)
    r = np.linalg.norm(quad2.grid.points, axis=-1)
    linear = np.clip((0.8 - r) / 0.6, 0, 1)
    assert admissible_energy(op, K, V, linear) >= capacity(op, K, V, perturbations=0).value


def test_cutoff_2d_is_optimal_for_radial(quad2):
    rep = cutoff_energy_2d(quad2, (0.0, 0.0), 0.01, with_capacity=True)
    assert rep.bound == pytest.approx(8 * math.pi / math.log(100), rel=0.03)
    assert rep.capacity == pytest.approx(rep.bound, rel=0.05)
    assert rep.energy >= rep.capacity
    with pytest.raises(ParameterError):
        cutoff_energy_2d(quad2, (0.0, 0.0), 1.5)


def test_cutoff_3d_dominates(quad3):
    rep = cutoff_energy_3d(quad3, (0.0, 0.0, 0.0), 0.04, with_capacity=True)
    assert 1 <= rep.ratio_to_capacity <= 10


def test_reciprocity_and_level_sets(quad2):
    V = Region.ball(quad2.grid, 1.0)
    gf = green_for_state(quad2, V, (0.0, 0.0))
    rows = reciprocity_check(quad2, V, (0.0, 0.0), [0.01, 0.04], gf)
    assert all(r["ok"] for r in rows)
    a = math.log(2) / (2 * math.pi)
    cap, resolved = level_set_capacity(gf, a)
    assert resolved and cap * a == pytest.approx(1, rel=0.05)
    cap2, _ = level_set_capacity(gf, 2 * a)
    assert cap2 == pytest.approx(cap / 2, rel=0.05)
