"""Discrete Green's functions of the linearized operator and the bounds they satisfy."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import (
    ConfigurationError,
    DegenerateError,
    DomainError,
    NotCompactlyContainedError,
    ParameterError,
)
from .fits import FitReport, fit_linear, fit_power_law
from .grid import Region, compactly_contained, erode, integrate_region, values_on_level
from .linalg import solve_spd
from .operator import DirichletPiece, LinearizedOperator, assemble_operator, as_region
from .sections import Section, build_section, supporting_height
from .solver import PotentialState

# sections narrower than this many nodes across are below the resolution floor
RESOLUTION_FLOOR = 8


@dataclass(frozen=True, eq=False)
class GreenFunction:
    """Solution of ``A g = e_pole / h^dim`` on the free nodes of ``V``; zero elsewhere."""

    op: LinearizedOperator
    pole: tuple
    g: np.ndarray
    stats: dict = field(default_factory=dict)

    @property
    def grid(self):
        return self.op.grid

    @property
    def V(self):
        return self.op.V

    def punctured(self):
        """Mask of ``V`` without the pole node."""
        m = self.V.mask.copy()
        m[self.pole] = False
        return m

    def at(self, point):
        return float(self.g[self.grid.nearest_index(point)])


def green_function(op: LinearizedOperator, x0, rtol: float = 1e-10) -> GreenFunction:
    """Green's function with pole at the node nearest ``x0``.

    Raises
    ------
    DomainError
        If the pole is not an interior node of ``V``.
    SolverFailureError
        If CG fails to reach ``rtol``.
    """
    g = op.grid
    pole = g.nearest_index(np.asarray(x0, dtype=float))
    if not erode(op.V.mask, 1)[pole]:
        raise DomainError(f"pole {pole} is not an interior node of V")
    sysm = op.dirichlet_V()
    b = np.zeros(sysm.A.shape[0])
    b[sysm.index[pole]] = 1.0 / g.cell_volume
    x, st = solve_spd(sysm.A, b, rtol=rtol)
    field_ = sysm.extend(x)
    st = dict(st, lumped_cells=op.lumped_cells, source_mass=1.0, source="single node, value 1/h^dim")
    return GreenFunction(op, pole, field_, st)


def green_for_state(state: PotentialState, V, x0) -> GreenFunction:
    return green_function(assemble_operator(state, V), x0)


def boundary_values(gf: GreenFunction, section: Section):
    """Values of ``g`` on the continuous boundary of ``section`` (axis-bond crossings)."""
    if section.height is None:
        raise DegenerateError("boundary values need an undilated section")
    return values_on_level(gf.grid, gf.g, section.height, section.t, mask=section.mask)


def _check_hypothesis(state, x0, t, V: Region, factor):
    """Require ``S(x0, factor)`` compactly contained in ``V``."""
    try:
        return build_section(state, x0, factor, container=V.mask)
    except NotCompactlyContainedError:
        raise NotCompactlyContainedError(
            f"hypothesis fails: S(x0, {factor:g}) (for t={t:g}) is not compactly contained in V"
        ) from None


def verify_bounds_fixed_density(state: PotentialState, V, x0, t_list, gf: Optional[GreenFunction] = None) -> FitReport:
    """Fit ``g`` on the section boundaries against ``t``.

    3D: log-log fit of the mean of min and max of ``g`` on ``dS(x0, t)``
    (expected slope ``-1/2``); ``extras["increment_slope"]`` is the same fit
    applied to ``g(t) - g(2t)``, which removes the additive constant
    contributed by the outer boundary of ``V``.
    2D: linear fit of ``g`` against ``|log t|``.
    """
    V = as_region(state.grid, V)
    if gf is None:
        gf = green_for_state(state, V, x0)
    n = state.dim
    t_list = sorted(float(t) for t in t_list)
    rows = []
    for t in t_list:
        _check_hypothesis(state, x0, t, V, 2 * t if n >= 3 else math.sqrt(t))
        s = build_section(state, x0, t)
        vals = boundary_values(gf, s)
        rows.append((t, float(vals.min()), float(vals.max()), float(vals.mean()), _diameter_nodes(s)))
    ts = np.array([r[0] for r in rows])
    gmin = np.array([r[1] for r in rows])
    gmax = np.array([r[2] for r in rows])
    gmid = 0.5 * (gmin + gmax)
    floor_ok = [r[4] >= RESOLUTION_FLOOR for r in rows]
    extras = {
        "g_min": gmin.tolist(),
        "g_max": gmax.tolist(),
        "diameter_nodes": [r[4] for r in rows],
        "resolved": floor_ok,
        "lumped_cells": gf.op.lumped_cells,
    }
    if n >= 3:
        rep = fit_power_law(ts, gmid, **extras)
        rep.extras["slope_min"] = fit_power_law(ts, gmin).slope
        rep.extras["slope_max"] = fit_power_law(ts, gmax).slope
        inc_t, inc_v = [], []
        for i, t in enumerate(ts):
            j = np.flatnonzero(np.isclose(ts, 2 * t))
            if j.size:
                inc_t.append(t)
                inc_v.append(gmid[i] - gmid[j[0]])
        if len(inc_t) >= 4:
            rep.extras["increment_slope"] = fit_power_law(inc_t, inc_v).slope
        return rep
    return fit_linear(np.abs(np.log(ts)), gmid, **extras)


def _diameter_nodes(s: Section):
    idx = np.argwhere(s.mask)
    return int((idx.max(axis=0) - idx.min(axis=0)).min()) + 1 if idx.size else 0


def log_trapezoid(fn: Callable, a: float, b: float, points: int = 32):
    """Trapezoid rule for ``int_a^b fn(s) ds`` on a log-spaced grid of ``points`` nodes."""
    s = np.geomspace(a, b, points)
    vals = np.array([fn(v) for v in s])
    return float(np.trapezoid(vals, s)), s, vals


def section_mu_integral(state, x0, t, points=32, container=None):
    """``int_t^{sqrt t} mu(S(x0, s)) / s^2 ds`` by the log-spaced trapezoid rule."""

    def integrand(s):
        return build_section(state, x0, s, container=container).mu / s**2

    val, _, _ = log_trapezoid(integrand, t, math.sqrt(t), points)
    return val


def verify_bounds_doubling(state: PotentialState, V, x0, t_list, gf: Optional[GreenFunction] = None, points: int = 32) -> FitReport:
    """Ratio of ``min g`` on ``dS(x0, t)`` to the doubling lower-bound expression.

    3D: expression ``t / mu(S(x0, t))``.  2D: ``|log t|^2 / int_t^{sqrt t} mu(S(x0, s)) ds / s^2``.
    The returned report fits the ratio against ``t`` (a flat ratio has slope 0);
    ``extras["spread"]`` is max/min of the ratio.
    """
    V = as_region(state.grid, V)
    if gf is None:
        gf = green_for_state(state, V, x0)
    n = state.dim
    ts, ratios, bounds, gmins = [], [], [], []
    for t in sorted(float(t) for t in t_list):
        _check_hypothesis(state, x0, t, V, 2 * t if n >= 3 else math.sqrt(t))
        s = build_section(state, x0, t)
        gmin = float(boundary_values(gf, s).min())
        if n >= 3:
            bound = t / s.mu
        else:
            bound = math.log(t) ** 2 / section_mu_integral(state, x0, t, points)
        ts.append(t)
        gmins.append(gmin)
        bounds.append(bound)
        ratios.append(gmin / bound)
    r = np.array(ratios)
    return fit_power_law(ts, r, spread=float(r.max() / r.min()), g_min=gmins, bound=bounds)


def gradient_lp_norm(gf: GreenFunction, section: Section, p: float) -> float:
    """``int_S |grad g|^p`` over the section with the pole node removed (2D)."""
    if p <= 1:
        raise ParameterError(f"p must exceed 1, got {p}")
    if gf.grid.dim != 2:
        raise ConfigurationError("the gradient integrability estimate is two-dimensional")
    grad = _grad(gf)
    mag = np.linalg.norm(grad, axis=-1)
    region = section.mask & gf.punctured()
    return integrate_region(gf.grid, np.where(region, mag, 0.0) ** p, region)


def _grad(gf: GreenFunction):
    from .grid import central_gradient

    return central_gradient(gf.grid, gf.g)


def gradient_lp_sweep(make_green: Callable, hs, p: float, t: float, x0=(0.0, 0.0)):
    """Integral of ``|grad g|^p`` over ``S(x0, t)`` for each spacing in ``hs``.

    ``make_green(h)`` returns ``(state, green_function)``.  Returns a dict
    with the integrals, successive ratios and successive differences.
    """
    vals = []
    for h in hs:
        state, gf = make_green(h)
        s = build_section(state, x0, t)
        vals.append(gradient_lp_norm(gf, s, p))
    vals = np.array(vals)
    return {
        "h": list(map(float, hs)),
        "p": p,
        "integrals": vals.tolist(),
        "ratios": (vals[1:] / vals[:-1]).tolist(),
        "differences": np.diff(vals).tolist(),
    }


def distribution_decay(gf: GreenFunction, T_list, mu_field=None) -> FitReport:
    """``mu{g > T}`` for each level and the log-log slope (3D; expected ``-3`` for bounded f)."""
    if gf.grid.dim < 3:
        raise ConfigurationError("distribution decay is checked in dimension n >= 3 only")
    T = np.asarray(T_list, dtype=float)
    if np.any(np.diff(T) <= 0):
        raise ParameterError("levels must be strictly increasing")
    f = gf.op.state.f if mu_field is None else mu_field
    meas = []
    for level in T:
        m = gf.V.mask & (gf.g > level)
        meas.append(float(np.sum(f[m])) * gf.grid.cell_volume)
    meas = np.array(meas)
    pos = meas > 0
    rep = fit_power_law(T[pos], meas[pos])
    rep.extras["table"] = list(zip(T.tolist(), meas.tolist()))
    return rep


def _all_offsets(dim):
    from .operator import bond_offsets

    return bond_offsets(dim)


def section_boundary_max(field_, section: Section):
    """Max of the linear interpolant of ``field_`` over every bond crossing ``dS``."""
    return float(values_on_level(section.grid, field_, section.height, section.t, mask=section.mask,
                                 offsets=_all_offsets(section.grid.dim)).max())


def iteration_bound_check(state: PotentialState, V, x0, t: float, gf: Optional[GreenFunction] = None):
    """Check ``max_{dS(t)} g_V <= max_{dS(t)} g_{S(2t)} + max_{dS(2t)} g_V``.

    Returns ``(lhs, rhs, ok)``; boundary maxima use every bond crossing, for
    which the inequality is an exact consequence of the discrete maximum principle.
    """
    V = as_region(state.grid, V)
    if gf is None:
        gf = green_for_state(state, V, x0)
    s1 = build_section(state, x0, t)
    s2 = _check_hypothesis(state, x0, t, V, 2 * t)
    g2 = green_for_state(state, s2.region(), x0)
    lhs = section_boundary_max(gf.g, s1)
    rhs = section_boundary_max(g2.g, s1) + section_boundary_max(gf.g, s2)
    return lhs, rhs, bool(lhs <= rhs * (1 + 1e-8))


def monotone_domain_check(state: PotentialState, V1, V2, x0, tol: float = 1e-8):
    """``V1 inside V2`` implies ``g_{V1} <= g_{V2} + tol`` at every node; returns the worst excess."""
    g1 = green_for_state(state, V1, x0)
    g2 = green_for_state(state, V2, x0)
    if np.any(g1.V.mask & ~g2.V.mask):
        raise DomainError("V1 is not contained in V2")
    excess = float(np.max(g1.g - g2.g))
    return excess, excess <= tol


def harnack_ratio(gf: GreenFunction, t_list, tau: float = 0.5):
    """Max/min of ``g`` over the shells ``S(x0, t)`` minus ``S(x0, tau t)`` around the pole.

    ``g`` solves the homogeneous equation there, so a Harnack chain bounds the
    ratio independently of ``t``.  Returns ``[(t, ratio), ...]``.
    """
    state = gf.op.state
    x0 = gf.grid.coords(gf.pole)
    out = []
    for t in t_list:
        outer = build_section(state, x0, t, container=gf.V.mask)
        inner = build_section(state, x0, tau * t)
        shell = outer.mask & ~inner.mask
        vals = gf.g[shell]
        if vals.size == 0 or vals.min() <= 0:
            raise DegenerateError(f"empty or nonpositive shell at t={t:g}")
        out.append((float(t), float(vals.max() / vals.min())))
    return out


def inner_data_scale(n: int, r: float):
    """Critical size of inner data at height ``r``: ``r^{(2-n)/2}`` (n >= 3) or ``|log r|`` (n = 2)."""
    return r ** ((2 - n) / 2) if n >= 3 else abs(math.log(r))


def compliant_inner_data(n: int, r: float):
    """Default inner data, strictly smaller than critical: ``r^{(2-n)/4}`` or ``|log r|^{1/2}``."""
    return r ** ((2 - n) / 4) if n >= 3 else math.sqrt(abs(math.log(r)))


@dataclass
class RemovableReport:
    r_list: list
    discrepancy: list
    inner_values: list
    mode: str

    @property
    def decreasing(self):
        d = self.discrepancy
        return all(b < a for a, b in zip(d, d[1:]))

    @property
    def final(self):
        return self.discrepancy[-1]


def removable_singularity_demo(state: PotentialState, R: float, boundary_data, r_list, x0=None,
                               inner="compliant", probe=(0.35, 0.65)) -> RemovableReport:
    """Compare ``L v = 0`` on ``S(x0, R)`` minus ``S(x0, r)`` with the full-section solution.

    Parameters
    ----------
    boundary_data : float or callable
        Outer Dirichlet data on ``dS(x0, R)`` (callable of points).
    inner : {"compliant", "zero", "critical"} or callable
        Inner data on ``dS(x0, r)`` as a function of ``r``.  A callable must be
        of smaller order than the critical size, checked on ``r_list``.
    probe : (float, float)
        Probe annulus as fractions of ``R``; it must avoid every inner section.

    Returns
    -------
    RemovableReport
        ``max |v - v_full|`` on the probe annulus for each ``r`` (sorted decreasing).
    """
    n = state.dim
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, float)
    r_list = sorted((float(r) for r in r_list), reverse=True)
    if inner == "compliant":
        data = lambda r: compliant_inner_data(n, r)
    elif inner == "zero":
        data = lambda r: 0.0
    elif inner == "critical":
        data = lambda r: inner_data_scale(n, r)
    elif callable(inner):
        data = inner
        ratios = [abs(data(r)) / inner_data_scale(n, r) for r in r_list]
        if not all(b < a for a, b in zip(ratios, ratios[1:])) and max(ratios) > 0:
            raise ConfigurationError("inner data is not of smaller order than the critical size on r_list")
    else:
        raise ConfigurationError(f"unknown inner data mode {inner!r}")
    if probe[0] * R <= r_list[0]:
        raise ConfigurationError("probe annulus must lie outside every inner section")
    outer = build_section(state, x0, R)
    V = outer.region()
    op = assemble_operator(state, V)
    full = op.system(V.mask, [DirichletPiece(~V.mask, V, boundary_data)])
    vfull = full.extend(solve_spd(full.A, full.rhs, rtol=1e-12)[0])
    probe_mask = (outer.height >= probe[0] * R) & (outer.height <= probe[1] * R) & V.mask
    disc, vals = [], []
    for r in r_list:
        K = build_section(state, x0, r).region()
        c = float(data(r))
        sysm = op.system(V.mask & ~K.mask, [DirichletPiece(K.mask, K, c, inward=True), DirichletPiece(~V.mask, V, boundary_data)])
        v = sysm.extend(solve_spd(sysm.A, sysm.rhs, rtol=1e-12)[0])
        disc.append(float(np.max(np.abs(v - vfull)[probe_mask])))
        vals.append(c)
    return RemovableReport(r_list, disc, vals, inner if isinstance(inner, str) else "callable")
