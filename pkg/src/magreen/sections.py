"""Sections ``S(x0, t) = {u < u(x0) + grad u(x0).(x - x0) + t}`` and their dilations."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import DegenerateError, DomainError, InsufficientDataError, NotCompactlyContainedError, ParameterError
from .fits import FitReport, fit_power_law
from .grid import Region, compactly_contained
from .solver import PotentialState

CONTAINMENT_MARGIN = 2


@dataclass(frozen=True, eq=False)
class Section:
    """Node set of a section together with its summary quantities.

    ``height`` is ``u - l`` with ``l`` the supporting affine function at the
    (snapped) center; it is ``None`` for dilated sections.
    """

    state: PotentialState
    index: tuple
    t: float
    mask: np.ndarray
    height: Optional[np.ndarray]
    volume: float
    com: np.ndarray
    mu: float
    snapped: bool = False
    alpha: float = 1.0
    meta: dict = field(default_factory=dict)

    @property
    def x0(self):
        return self.state.grid.coords(self.index)

    @property
    def grid(self):
        return self.state.grid

    def region(self) -> Region:
        """The section as a :class:`Region` whose boundary is the level ``height = t``."""
        if self.height is None:
            raise DegenerateError("dilated sections carry no height function")
        return Region(self.grid, self.mask, self.height - self.t, name=f"S(t={self.t:g})")


def supporting_height(state: PotentialState, index):
    """``u - l`` where ``l`` is the supporting affine function of ``u`` at node ``index``."""
    g = state.grid
    x0 = g.coords(index)
    slope = state.grad[index]
    return state.u - state.u[index] - np.tensordot(g.points - x0, slope, axes=([-1], [0]))


def _summarize(state, mask):
    g = state.grid
    n = int(mask.sum())
    vol = n * g.cell_volume
    com = g.points[mask].mean(axis=0) if n else np.full(g.dim, np.nan)
    mu = float(np.sum(state.f[mask])) * g.cell_volume if n else 0.0
    return vol, com, mu


def build_section(state: PotentialState, x0, t: float, container=None, margin: int = CONTAINMENT_MARGIN) -> Section:
    """Section of height ``t`` at the node nearest to ``x0``.

    Parameters
    ----------
    container : array of bool or Region, optional
        Set the section must be compactly contained in (default: the domain).

    Raises
    ------
    NotCompactlyContainedError
        If the node set, grown by ``margin`` nodes, reaches the container's
        boundary layer.
    """
    if not t > 0:
        raise ParameterError(f"section height must be positive, got {t}")
    g = state.grid
    index = g.nearest_index(x0)
    if not g.inside[index]:
        raise DomainError(f"x0={tuple(np.round(g.coords(index), 12))} is not an interior node")
    snapped = not np.allclose(g.coords(index), np.asarray(x0, float), atol=1e-12)
    height = supporting_height(state, index)
    mask = np.nan_to_num(height, nan=np.inf) < t
    cont = g.inside if container is None else (container.mask if isinstance(container, Region) else container)
    if not compactly_contained(mask, cont, margin):
        raise NotCompactlyContainedError(f"section S(x0, {t:g}) is not compactly contained in its container")
    vol, com, mu = _summarize(state, mask)
    return Section(state, index, float(t), mask, height, vol, com, mu, snapped)


def dilate_section(s: Section, alpha: float) -> Section:
    """``alpha``-dilation of ``s`` about its center of mass (pull-back membership)."""
    if not 0 < alpha <= 1:
        raise ParameterError(f"dilation factor must lie in (0, 1], got {alpha}")
    if alpha == 1:
        return replace(s, height=None)
    g = s.grid
    pull = s.com + (g.points - s.com) / alpha
    idx = np.rint((pull - g.origin) / g.h).astype(int)
    ok = np.all((idx >= 0) & (idx < np.array(g.shape)), axis=-1)
    mask = np.zeros(g.shape, dtype=bool)
    sel = tuple(idx[ok].T)
    mask[ok] = s.mask[sel]
    vol, com, mu = _summarize(s.state, mask)
    return Section(s.state, s.index, s.t, mask, None, vol, com, mu, s.snapped, alpha * s.alpha)


def volume_growth_report(state: PotentialState, x0, t_list) -> FitReport:
    """Log-log fit of ``|S(x0, t)|`` against ``t`` (expected slope ``n/2``)."""
    n = state.dim
    ts, vols = [], []
    skipped = []
    for t in t_list:
        try:
            s = build_section(state, x0, t)
        except NotCompactlyContainedError:
            skipped.append(float(t))
            continue
        ts.append(float(t))
        vols.append(s.volume)
    if len(ts) < 4:
        raise InsufficientDataError(f"only {len(ts)} compactly contained sections (need 4)")
    ratio = np.array(vols) / np.array(ts) ** (n / 2)
    return fit_power_law(ts, vols, ratio_min=float(ratio.min()), ratio_max=float(ratio.max()), skipped=skipped)


@dataclass(frozen=True)
class DoublingParams:
    """Measured doubling constants over a family of sections."""

    alpha: float
    beta: float
    beta_prime: float
    rows: tuple = ()


def doubling_report(state: PotentialState, x0, t_list, alpha: float) -> DoublingParams:
    """``beta = max mu(S(t)) / mu(alpha S(t/2))`` and ``beta' = max mu(S(2t)) / mu(S(t))``."""
    rows = []
    for t in t_list:
        s_t = build_section(state, x0, t)
        s_2t = build_section(state, x0, 2 * t)
        d_half = dilate_section(build_section(state, x0, t / 2), alpha)
        if d_half.mu <= 0:
            raise DegenerateError(f"dilated section alpha*S(t/2) is empty at t={t:g}")
        rows.append((float(t), s_t.mu / d_half.mu, s_2t.mu / s_t.mu))
    if not rows:
        raise InsufficientDataError("no heights given")
    arr = np.array([r[1:] for r in rows])
    return DoublingParams(float(alpha), float(arr[:, 0].max()), float(arr[:, 1].max()), tuple(rows))
