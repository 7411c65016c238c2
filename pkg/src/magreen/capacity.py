"""Capacity of compact sets for the linearized operator.

``cap(K, V)`` is the minimum of the discrete energy over fields equal to 1 on
``K`` and 0 outside ``V``.  The minimizer (equilibrium potential) solves the
Dirichlet problem with those data, and its energy equals the flux it sends
out of ``K``.  Cutoff functions are evaluated in the same discrete energy, so
every cutoff energy dominates the capacity exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateError, DomainError, NotCompactlyContainedError, ParameterError
from .grid import Region, compactly_contained
from .linalg import solve_spd
from .operator import DirichletPiece, LinearizedOperator, assemble_operator, as_region
from .sections import build_section, supporting_height
from .green import GreenFunction, boundary_values, green_for_state, section_mu_integral, RESOLUTION_FLOOR


@dataclass(eq=False)
class CapacityResult:
    """Capacity, equilibrium potential and diagnostics."""

    value: float
    potential: np.ndarray
    breakdown: dict
    K: Region
    V: Region
    flux: float = float("nan")
    perturbed: list = field(default_factory=list)
    residual: float = 0.0

    @property
    def minimal(self):
        return all(q >= self.value * (1 - 1e-12) for q in self.perturbed)


def _pieces(K: Region, V: Region):
    return [DirichletPiece(K.mask, K, 1.0, inward=True), DirichletPiece(~V.mask, V, 0.0)]


def _check_sets(K: Region, V: Region):
    if not np.any(K.mask):
        raise ParameterError("the compact set K is empty")
    if not compactly_contained(K.mask, V.mask, 1):
        raise DomainError(f"K={K.name!r} is not contained in the interior of V={V.name!r}")


def capacity(op: LinearizedOperator, K, V=None, perturbations: int = 5, seed: int = 0) -> CapacityResult:
    """Capacity of ``K`` relative to ``V`` (default: the operator's region).

    Parameters
    ----------
    perturbations : int
        Number of random admissible perturbations used to spot-check minimality.
    """
    g = op.grid
    V = op.V if V is None else as_region(g, V)
    K = as_region(g, K)
    _check_sets(K, V)
    free = V.mask & ~K.mask
    sysm = op.system(free, _pieces(K, V))
    x, st = solve_spd(sysm.A, sysm.rhs, rtol=1e-12)
    phi = sysm.extend(x)
    phi[K.mask] = 1.0
    value = sysm.energy(phi, g.h, g.dim)
    flux = sysm.boundary_flux(phi, g.h, g.dim, value=1.0)
    rng = np.random.default_rng(seed)
    perturbed = []
    for _ in range(perturbations):
        eta = np.zeros(g.shape)
        eta[free] = rng.normal(scale=0.05, size=int(free.sum()))
        perturbed.append(sysm.energy(phi + eta, g.h, g.dim))
    return CapacityResult(value, phi, sysm.energy_breakdown(phi, g.h, g.dim), K, V, flux, perturbed, st["residual"])


def admissible_energy(op: LinearizedOperator, K, V, field_) -> float:
    """Energy of ``field_`` (values on ``V`` minus ``K``; 1 on ``K``, 0 beyond ``V``)."""
    g = op.grid
    K = as_region(g, K)
    V = as_region(g, V)
    _check_sets(K, V)
    sysm = op.system(V.mask & ~K.mask, _pieces(K, V))
    phi = np.where(V.mask, np.nan_to_num(field_), 0.0)
    phi[K.mask] = 1.0
    return sysm.energy(phi, g.h, g.dim)


def gamma_3d(s, t, n=3):
    """Cutoff equal to 1 below ``t``, 0 above ``2t``, interpolating ``s^{-(n-2)/2}`` between."""
    s = np.asarray(s, dtype=float)
    k = (n - 2) / 2
    mid = t**k / (1 - 0.5**k) * (np.maximum(s, t) ** -k - (2 * t) ** -k)
    return np.where(s <= t, 1.0, np.where(s >= 2 * t, 0.0, mid))


def gamma_2d(s, t):
    """Logarithmic cutoff: 1 below ``t``, ``2 log s / log t - 1`` on ``[t, sqrt t]``, 0 above."""
    s = np.asarray(s, dtype=float)
    mid = 2 * np.log(np.clip(s, t, math.sqrt(t))) / math.log(t) - 1
    return np.where(s <= t, 1.0, np.where(s >= math.sqrt(t), 0.0, mid))


@dataclass
class CutoffReport:
    """Energy of an explicit cutoff together with the quantities it is compared with."""

    t: float
    energy: float
    mu: float
    bound: float
    capacity: float = float("nan")

    @property
    def ratio_to_capacity(self):
        return self.energy / self.capacity


def _cutoff(state, x0, t, outer, gamma, V, with_capacity):
    g = state.grid
    try:
        outer_sec = build_section(state, x0, outer)
    except NotCompactlyContainedError:
        raise NotCompactlyContainedError(f"hypothesis fails: S(x0, {outer:g}) is not compactly contained") from None
    if V is None:
        V = outer_sec.region()
    else:
        V = as_region(g, V)
        if not compactly_contained(outer_sec.mask, V.mask, 1):
            raise NotCompactlyContainedError(f"S(x0, {outer:g}) is not compactly contained in V")
    K = build_section(state, x0, t)
    op = assemble_operator(state, V)
    phi = gamma(np.nan_to_num(K.height, nan=np.inf))
    energy = admissible_energy(op, K.region(), V, phi)
    cap = capacity(op, K.region(), V, perturbations=0).value if with_capacity else float("nan")
    return energy, K, cap


def cutoff_energy_3d(state, x0, t: float, V=None, with_capacity: bool = False) -> CutoffReport:
    """Energy of the power-law cutoff of ``u - l`` between heights ``t`` and ``2t`` (3D).

    ``bound`` is ``mu(S(x0, t)) / t``; the energy is at most a constant times it.
    """
    if state.dim < 3:
        raise ParameterError("the power-law cutoff is for n >= 3")
    if not t > 0:
        raise ParameterError("t must be positive")
    energy, K, cap = _cutoff(state, x0, t, 2 * t, lambda s: gamma_3d(s, t, state.dim), V, with_capacity)
    return CutoffReport(t, energy, K.mu, K.mu / t, cap)


def cutoff_energy_2d(state, x0, t: float, V=None, with_capacity: bool = False, points: int = 32) -> CutoffReport:
    """Energy of the logarithmic cutoff between heights ``t`` and ``sqrt t`` (2D).

    ``bound`` is ``8 / |log t|^2 * int_t^{sqrt t} mu(S(x0, s)) / s^2 ds``.
    """
    if state.dim != 2:
        raise ParameterError("the logarithmic cutoff is two-dimensional")
    if not 0 < t < 1:
        raise ParameterError(f"need 0 < t < 1, got {t}")
    energy, K, cap = _cutoff(state, x0, t, math.sqrt(t), lambda s: gamma_2d(s, t), V, with_capacity)
    bound = 8 / math.log(t) ** 2 * section_mu_integral(state, x0, t, points)
    return CutoffReport(t, energy, K.mu, bound, cap)


def reciprocity_check(state, V, x0, t_list, gf: GreenFunction = None, slack: float = 0.05):
    """Sandwich ``min g * cap <= 1 <= max g * cap`` on section boundaries.

    Returns a list of dicts with ``t, g_min, g_max, cap, lo, hi, ok``.
    """
    V = as_region(state.grid, V)
    if gf is None:
        gf = green_for_state(state, V, x0)
    rows = []
    for t in t_list:
        try:
            build_section(state, x0, 2 * t, container=V.mask)
        except NotCompactlyContainedError:
            raise NotCompactlyContainedError(f"hypothesis fails: S(x0, {2 * t:g}) not compactly contained in V") from None
        s = build_section(state, x0, t)
        vals = boundary_values(gf, s)
        cap = capacity(gf.op, s.region(), V, perturbations=0).value
        lo, hi = float(vals.min()) * cap, float(vals.max()) * cap
        rows.append(dict(t=float(t), g_min=float(vals.min()), g_max=float(vals.max()), cap=cap, lo=lo, hi=hi,
                         ok=bool(lo <= 1 + slack and hi >= 1 - slack)))
    return rows


def level_set_capacity(gf: GreenFunction, a: float, op: LinearizedOperator = None):
    """Capacity of ``J_a = {g >= a}`` in ``V``; the continuum value is ``1/a``.

    Returns ``(cap, resolved)`` where ``resolved`` is False when ``J_a`` is
    narrower than the resolution floor.
    """
    op = gf.op if op is None else op
    gmax = float(gf.g.max())
    if not 0 < a < gmax:
        raise DegenerateError(f"level a={a:g} must lie strictly between 0 and max g = {gmax:g}")
    level = np.where(gf.V.mask, a - gf.g, 1.0)
    J = Region(gf.grid, level < 0, level, name=f"J_{a:g}")
    if not compactly_contained(J.mask, gf.V.mask, 1):
        raise NotCompactlyContainedError(f"J_a for a={a:g} reaches the boundary of V")
    idx = np.argwhere(J.mask)
    width = int((idx.max(axis=0) - idx.min(axis=0)).min()) + 1
    return capacity(op, J, gf.V, perturbations=0).value, width >= RESOLUTION_FLOOR
