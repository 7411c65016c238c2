from __future__ import annotations

import math

import numpy as np
import pytest

from magreen.errors import ConfigurationError, DomainError, NotCompactlyContainedError, ParameterError
from magreen.green import (
    distribution_decay,
    gradient_lp_norm,
    green_for_state,
    green_function,
    harnack_ratio,
    iteration_bound_check,
    monotone_domain_check,
    removable_singularity_demo,
    verify_bounds_doubling,
    verify_bounds_fixed_density,
)
from magreen.grid import Region
from magreen.linalg import solve_spd
from magreen.operator import assemble_operator
from magreen.sections import build_section


@pytest.fixture(scope="module")
def disk_green(quad2):
    return green_for_state(quad2, Region.ball(quad2.grid, 1.0), (0.0, 0.0))


@pytest.fixture(scope="module")
def ball_green(quad3):
    return green_for_state(quad3, Region.ball(quad3.grid, 1.0), (0.0, 0.0, 0.0))


def test_disk_green_closed_form(disk_green):
    g = disk_green
    r = np.linalg.norm(g.grid.points, axis=-1)
    sel = (r >= 0.1) & (r <= 0.9)
    exact = np.log(1 / r[sel]) / (2 * math.pi)
    assert np.max(np.abs(g.g[sel] - exact) / exact) <= 0.03
    assert g.stats["residual"] <= 1e-10


def test_ball_green_closed_form(quad3):
    from magreen.grid import parse_domain
    from magreen.solver import potential_from_function

    st = potential_from_function(parse_domain("ball:1.2"), 1 / 24, lambda p: 0.5 * np.sum(p**2, axis=-1))
    g = green_for_state(st, Region.ball(st.grid, 1.0), (0.0, 0.0, 0.0))
    r = np.linalg.norm(st.grid.points, axis=-1)
    sel = (r >= 0.15) & (r <= 0.85)
    exact = (1 / r[sel] - 1) / (4 * math.pi)
    assert np.max(np.abs(g.g[sel] - exact) / exact) <= 0.05


def test_positive_and_zero_outside(disk_green):
    g = disk_green
    assert np.all(g.g[g.V.mask] > 0)
    assert np.all(g.g[~g.V.mask] == 0)


def test_symmetry_of_green_function(osc2):
    op = assemble_operator(osc2, Region.ball(osc2.grid, 1.0))
    sysm = op.dirichlet_V()
    rng = np.random.default_rng(0)
    nodes = np.argwhere(sysm.free)
    pairs = rng.choice(len(nodes), size=(10, 2), replace=False)
    for a, b in pairs:
        ia, ib = tuple(nodes[a]), tuple(nodes[b])
        ea = np.zeros(sysm.A.shape[0]); ea[sysm.index[ia]] = 1
        eb = np.zeros(sysm.A.shape[0]); eb[sysm.index[ib]] = 1
        ga = solve_spd(sysm.A, ea, rtol=1e-12)[0]
        gb = solve_spd(sysm.A, eb, rtol=1e-12)[0]
        assert ga[sysm.index[ib]] == pytest.approx(gb[sysm.index[ia]], rel=1e-8)


def test_pole_must_be_interior(quad2):
    op = assemble_operator(quad2, Region.ball(quad2.grid, 0.5))
    with pytest.raises(DomainError):
        green_function(op, (0.9, 0.0))


def test_fixed_density_2d_log_law(quad2, disk_green):
    rep = verify_bounds_fixed_density(quad2, disk_green.V, (0.0, 0.0), [0.005, 0.01, 0.02, 0.04, 0.08], disk_green)
    assert rep.model == "linear" and rep.r2 >= 0.995
    assert rep.slope == pytest.approx(1 / (4 * math.pi), rel=0.03)


def test_fixed_density_hypothesis_checked(quad2, disk_green):
    with pytest.raises(NotCompactlyContainedError):
        verify_bounds_fixed_density(quad2, disk_green.V, (0.0, 0.0), [0.01, 0.02, 0.04, 0.3], disk_green)


def test_fixed_density_3d_reports_slopes(quad3, ball_green):
    rep = verify_bounds_fixed_density(quad3, ball_green.V, (0.0, 0.0, 0.0), [0.02, 0.04, 0.08, 0.16], ball_green)
    assert rep.model == "power" and rep.slope < 0
    assert {"slope_min", "slope_max"} <= set(rep.extras)


def test_doubling_ratio_2d_bounded(quad2, disk_green):
    rep = verify_bounds_doubling(quad2, disk_green.V, (0.0, 0.0), [0.005, 0.01, 0.02, 0.04], disk_green)
    # g = (|log t| - log 2) / (4 pi) on dS(0, t) and the bound is |log t| / pi
    for t, ratio in rep.points:
        exact = (abs(math.log(t)) - math.log(2)) / (4 * abs(math.log(t)))
        assert ratio == pytest.approx(exact, rel=0.03)
    assert rep.extras["spread"] < 1.3
    # bound expression is |log t| / pi for f = 1
    assert rep.extras["bound"][0] == pytest.approx(abs(math.log(0.005)) / math.pi, rel=0.02)


def test_gradient_lp(disk_green, quad2):
    s = build_section(quad2, (0.0, 0.0), 0.125)
    val = gradient_lp_norm(disk_green, s, 1.5)
    exact = 2 * math.pi * (1 / (2 * math.pi)) ** 1.5 * 2 * 0.5**0.5
    # the punctured quadrature misses an O(sqrt h) core around the pole
    assert exact * 0.8 < val < exact
    with pytest.raises(ParameterError):
        gradient_lp_norm(disk_green, s, 1.0)


def test_distribution_decay_errors(disk_green, ball_green):
    with pytest.raises(ConfigurationError):
        distribution_decay(disk_green, [0.1, 0.2])
    with pytest.raises(ParameterError):
        distribution_decay(ball_green, [0.2, 0.1, 0.3, 0.4])


def test_distribution_decay_table(ball_green):
    rep = distribution_decay(ball_green, [0.1, 0.2, 0.4, 0.8])
    meas = [m for _, m in rep.extras["table"]]
    assert all(b < a for a, b in zip(meas, meas[1:]))
    assert rep.slope < -1


def test_maximum_principle_checks(quad2, disk_green):
    lhs, rhs, ok = iteration_bound_check(quad2, disk_green.V, (0.0, 0.0), 0.05, disk_green)
    assert ok and lhs <= rhs
    excess, ok = monotone_domain_check(quad2, Region.ball(quad2.grid, 0.6), disk_green.V, (0.0, 0.0))
    assert ok


def test_harnack_ratio_bounded(disk_green):
    rows = harnack_ratio(disk_green, [0.02, 0.04, 0.08])
    assert all(1 < r < 5 for _, r in rows)


def test_removable_negative_control_does_not_vanish(quad2):
    rep = removable_singularity_demo(quad2, 0.5, 1.0, [0.1, 0.05, 0.025], inner="critical")
    assert rep.final >= 0.5 * rep.discrepancy[0]


def test_removable_compliant_decreases(quad2):
    rep = removable_singularity_demo(quad2, 0.5, 1.0, [0.1, 0.05, 0.025])
    assert rep.decreasing


def test_removable_zero_inner_data(quad2):
    rep = removable_singularity_demo(quad2, 0.5, 1.0, [0.1, 0.05, 0.025], inner="zero")
    assert rep.decreasing


def test_removable_rejects_critical_callable(quad2):
    with pytest.raises(ConfigurationError):
        removable_singularity_demo(quad2, 0.5, 1.0, [0.1, 0.05], inner=lambda r: 2 * abs(math.log(r)))
    with pytest.raises(ConfigurationError):
        removable_singularity_demo(quad2, 0.5, 1.0, [0.3, 0.05])
