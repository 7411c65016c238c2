from __future__ import annotations

import math

import numpy as np
import pytest

from magreen.errors import ParameterError, PreconditionError
from magreen.grid import parse_domain
from magreen.fits import observed_orders
from magreen.solver import (
    DensitySpec,
    cofactor_divergence,
    cofactor_matrix,
    potential_from_function,
    sobolev_energy,
    solve_monge_ampere,
)


def _err(state, exact):
    m = state.grid.inside
    return float(np.max(np.abs(state.u - exact(state.grid.points))[m]))


@pytest.mark.parametrize("spec", ["disk:1.0", "ball:1.0"])
def test_constant_density_on_ball_is_exact(spec):
    h = 1 / 32 if spec.startswith("disk") else 1 / 8
    st = solve_monge_ampere(parse_domain(spec), DensitySpec.constant(1.0), h)
    assert _err(st, lambda p: 0.5 * (np.sum(p**2, axis=-1) - 1)) < 1e-10
    assert st.residual <= 1e-8


def test_constant_density_on_ellipse_is_exact():
    a, b = 1.0, 0.6
    st = solve_monge_ampere(parse_domain(f"ellipse:{a},{b}"), DensitySpec.constant(1.0), 1 / 32)
    exact = lambda p: 0.5 * a * b * (p[..., 0] ** 2 / a**2 + p[..., 1] ** 2 / b**2 - 1)
    # exact up to the Newton tolerance
    assert _err(st, exact) < 1e-8


def test_radial_oracle_second_order():
    dens = DensitySpec.from_expression("(1 + x*x + y*y)*exp(x*x + y*y)", 1.0, 2 * math.e)
    exact = lambda p: np.exp(0.5 * np.sum(p**2, axis=-1)) - math.exp(0.5)
    hs = [1 / 16, 1 / 32, 1 / 64]
    errs = [_err(solve_monge_ampere(parse_domain("disk:1.0"), dens, h), exact) for h in hs]
    assert all(e <= 5 * h * h for e, h in zip(errs, hs))
    assert min(observed_orders(hs, errs)) >= 1.7


def test_solution_is_convex(osc2):
    assert osc2.min_hessian_eig > 0
    side = osc2.sidecar()
    assert side["residual"] <= 1e-8 and side["newton_iters"] >= 1


def test_density_bounds_checked():
    dens = DensitySpec.from_expression("1 + x", 0.5, 1.5)
    with pytest.raises(PreconditionError):
        solve_monge_ampere(parse_domain("disk:1.0"), dens, 1 / 16)


def test_nonconstant_density_needs_bounds():
    with pytest.raises(ParameterError):
        DensitySpec.from_expression("1 + x")


def test_tolerance_floor():
    with pytest.raises(ParameterError):
        solve_monge_ampere(parse_domain("disk:1.0"), DensitySpec.constant(1.0), 1 / 16, tol=1e-12)


def test_cofactor_identity():
    rng = np.random.default_rng(1)
    for n in (2, 3):
        A = rng.normal(size=(5, n, n))
        H = A @ np.swapaxes(A, -1, -2) + np.eye(n)
        U = cofactor_matrix(H)
        assert np.allclose(U, np.swapaxes(U, -1, -2))
        assert np.allclose(U @ H, np.linalg.det(H)[:, None, None] * np.eye(n))


def test_cofactor_rows_divergence_free():
    fn = lambda p: np.exp(0.5 * (p[..., 0] ** 2 + 2 * p[..., 1] ** 2)) + p[..., 0] ** 4
    st = potential_from_function(parse_domain("disk:1.0"), 1 / 64, fn)
    div = cofactor_divergence(st)
    inner = np.linalg.norm(st.grid.points, axis=-1) < 0.8
    scale = np.nanmax(np.abs(st.cof[inner]))
    assert np.nanmax(np.abs(div[inner])) < 1e-2 * scale


def test_sobolev_energy_of_quadratic(quad2):
    inner = np.linalg.norm(quad2.grid.points, axis=-1) < 1
    area = inner.sum() * quad2.grid.h**2
    assert sobolev_energy(quad2, 0.5, inner) == pytest.approx(2**1.5 * area)
    with pytest.raises(ParameterError):
        sobolev_energy(quad2, -0.1)
