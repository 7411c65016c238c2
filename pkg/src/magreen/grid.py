"""Uniform Cartesian grids over convex domains, node sets and quadrature.

Every field in the package is a plain ``numpy`` array with the grid's
``shape`` (scalar fields) or ``shape + (dim,)`` / ``shape + (dim, dim)``
(vector and matrix fields).  Values outside the domain are ``NaN``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError, DegenerateError, DomainError, ParameterError

EXTERIOR = 0
INTERIOR = 1
BOUNDARY_ADJACENT = 2

# smallest admissible bond fraction to a cut boundary in the linear operators
MIN_FRACTION = 1e-2
# domain nodes this close to the boundary (in units of h) become boundary points
SNAP_FRACTION = 1e-3


@dataclass(frozen=True)
class ConvexDomain:
    """A bounded convex domain ``{phi < 0}``.

    ``kind`` is one of ``"ball"`` (disk in 2D), ``"ellipsoid"`` (ellipse in
    2D), ``"superellipse"`` (``sum |x_i/a_i|^p < 1``, a smooth convex set
    inscribed in a box) or ``"level"`` (user supplied level function).
    """

    kind: str
    axes: tuple
    center: tuple
    exponent: float = 2.0
    level_fn: Optional[Callable] = field(default=None, compare=False)
    inradius_hint: Optional[float] = None
    spec: str = ""

    def __post_init__(self):
        if len(self.axes) != len(self.center):
            raise ConfigurationError("domain axes and center must have the same length")
        if len(self.axes) not in (2, 3):
            raise ConfigurationError(f"only 2D and 3D domains are supported, got dim={len(self.axes)}")
        if min(self.axes) <= 0:
            raise ConfigurationError("domain semi-axes must be positive")
        if self.kind == "superellipse" and self.exponent < 2:
            raise ConfigurationError("superellipse exponent must be >= 2 for a smooth convex set")
        if self.kind == "level" and self.level_fn is None:
            raise ConfigurationError("level domains need a level function")

    @property
    def dim(self):
        return len(self.axes)

    @property
    def inradius(self):
        if self.kind == "level":
            return self.inradius_hint if self.inradius_hint is not None else min(self.axes) / 2
        return min(self.axes)

    def phi(self, points):
        """Level function at ``points`` (shape ``(..., dim)``); negative inside."""
        points = np.asarray(points, dtype=float)
        if self.kind == "level":
            return np.asarray(self.level_fn(points), dtype=float)
        rel = (points - np.asarray(self.center)) / np.asarray(self.axes)
        if self.kind in ("ball", "ellipsoid"):
            return np.sum(rel**2, axis=-1) - 1.0
        return np.sum(np.abs(rel) ** self.exponent, axis=-1) - 1.0

    def contains(self, points):
        return self.phi(points) < 0


def parse_domain(text: str) -> ConvexDomain:
    """Parse a domain string such as ``disk:1.0``, ``ellipse:1,0.5@0.1,0``.

    Accepted kinds: ``disk``, ``ball`` (3D), ``ellipse``, ``ellipsoid``,
    ``superellipse:p`` (2D, inscribed in ``[-1, 1]^2``) and
    ``superellipse3:p``.  An optional ``@c1,c2[,c3]`` suffix moves the center.
    """
    text = text.strip()
    body, _, center_txt = text.partition("@")
    kind, _, args = body.partition(":")
    kind = kind.strip().lower()
    try:
        values = tuple(float(v) for v in args.split(",")) if args else ()
        center = tuple(float(v) for v in center_txt.split(",")) if center_txt else None
    except ValueError:
        raise ConfigurationError(f"malformed domain {text!r}") from None
    if kind == "disk" and len(values) == 1:
        axes = values * 2
        name = "ball"
    elif kind == "ball" and len(values) == 1:
        axes = values * 3
        name = "ball"
    elif kind == "ellipse" and len(values) == 2:
        axes, name = values, "ellipsoid"
    elif kind == "ellipsoid" and len(values) == 3:
        axes, name = values, "ellipsoid"
    elif kind in ("superellipse", "superellipse3") and len(values) == 1:
        dim = 3 if kind.endswith("3") else 2
        axes = (1.0,) * dim
        center = center or (0.0,) * dim
        return ConvexDomain("superellipse", axes, center, exponent=values[0], spec=text)
    else:
        raise ConfigurationError(f"unknown or malformed domain {text!r}")
    center = center or (0.0,) * len(axes)
    return ConvexDomain(name, axes, center, spec=text)


class Grid:
    """Uniform grid covering a convex domain with a two-node exterior margin.

    Nodes sit at ``center + k*h`` so the domain center is always a node.
    """

    def __init__(self, domain: ConvexDomain, h: float, margin: int = 2):
        self.domain = domain
        self.dim = domain.dim
        self.h = float(h)
        half = [int(math.ceil(a / self.h)) + margin for a in domain.axes]
        self.center_index = tuple(half)
        self.shape = tuple(2 * n + 1 for n in half)
        self.origin = np.array([c - n * self.h for c, n in zip(domain.center, half)])
        self.axes = [self.origin[k] + self.h * np.arange(self.shape[k]) for k in range(self.dim)]

    def __repr__(self):
        return f"Grid(domain={self.domain.spec or self.domain.kind!r}, h={self.h:g}, shape={self.shape})"

    @property
    def cell_volume(self):
        return self.h**self.dim

    @property
    def bbox(self):
        lo = self.origin
        hi = self.origin + self.h * (np.array(self.shape) - 1)
        return lo, hi

    @cached_property
    def points(self):
        """Coordinates of every node, shape ``shape + (dim,)``."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    @cached_property
    def phi(self):
        return self.domain.phi(self.points)

    @cached_property
    def _classified(self):
        """Unknown nodes and their axis boundary fractions.

        Nodes closer than ``SNAP_FRACTION * h`` to the boundary along an axis
        are snapped onto it: they are treated as boundary points carrying the
        Dirichlet data, and their inside neighbors see a full-length bond.
        """
        raw = self.phi < 0
        fr = np.full((self.dim, 2) + self.shape, np.nan)
        pts = self.points
        for k in range(self.dim):
            for j, s in enumerate((1, -1)):
                frac = np.where(raw, 1.0, np.nan)
                cut = raw & ~np.roll(raw, -s, axis=k)
                if np.any(cut):
                    p = pts[cut]
                    step = np.zeros(self.dim)
                    step[k] = s * self.h
                    frac[cut] = bisect_segment(self.domain.phi, p, p + step)
                fr[k, j] = frac
        snapped = raw & np.any(fr < SNAP_FRACTION, axis=(0, 1))
        inside = raw & ~snapped
        for k in range(self.dim):
            for j, s in enumerate((1, -1)):
                nb_snapped = np.roll(snapped, -s, axis=k)
                fr[k, j][nb_snapped & inside] = 1.0
                fr[k, j][~inside] = np.nan
        return inside, fr

    @property
    def inside(self):
        return self._classified[0]

    @cached_property
    def kind(self):
        """Node classification: 0 exterior, 1 interior, 2 boundary-adjacent."""
        out = np.zeros(self.shape, dtype=np.int8)
        out[self.inside] = INTERIOR
        touching = np.zeros(self.shape, dtype=bool)
        for k in range(self.dim):
            for s in (1, -1):
                touching |= ~np.roll(self.inside, -s, axis=k)
        out[self.inside & touching] = BOUNDARY_ADJACENT
        return out

    @property
    def boundary_adjacent(self):
        return self.kind == BOUNDARY_ADJACENT

    @property
    def strict_interior(self):
        return self.kind == INTERIOR

    def nearest_index(self, point):
        point = np.asarray(point, dtype=float)
        if point.shape != (self.dim,):
            raise ParameterError(f"point must have {self.dim} coordinates")
        idx = np.rint((point - self.origin) / self.h).astype(int)
        if np.any(idx < 0) or np.any(idx >= np.array(self.shape)):
            raise DomainError(f"point {tuple(point)} lies outside the grid")
        return tuple(int(i) for i in idx)

    def coords(self, index):
        return self.origin + self.h * np.asarray(index, dtype=float)

    @property
    def axis_fractions(self):
        """Distance (in units of h) from each inside node to the boundary of the domain.

        Shape ``(dim, 2) + shape``; entry ``[k, 0]`` looks along ``+e_k``,
        ``[k, 1]`` along ``-e_k``.  It is 1 where the neighbor is inside,
        the root of ``phi`` on the segment otherwise, and NaN at exterior nodes.
        """
        return self._classified[1]


def bisect_segment(fn, start, end, iterations=60):
    """Fraction ``s`` in (0, 1] with ``fn(start + s (end - start)) = 0``.

    ``fn`` must be negative at ``start`` and nonnegative at ``end``.
    """
    lo = np.zeros(len(start))
    hi = np.ones(len(start))
    diff = end - start
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        neg = fn(start + mid[:, None] * diff) < 0
        lo = np.where(neg, mid, lo)
        hi = np.where(neg, hi, mid)
    return 0.5 * (lo + hi)


def build_grid(domain: ConvexDomain, h: float) -> Grid:
    """Grid with spacing ``h`` over ``domain``; rejects grids that are too coarse."""
    if not h > 0:
        raise ParameterError(f"grid spacing must be positive, got {h}")
    if h >= domain.inradius / 4:
        raise ConfigurationError(
            f"h={h:g} too coarse for domain with inradius {domain.inradius:g} (need h < inradius/4)"
        )
    grid = Grid(domain, h)
    c = grid.center_index
    for k in range(grid.dim):
        line = tuple(slice(None) if j == k else c[j] for j in range(grid.dim))
        if grid.inside[line].sum() < 8:
            raise ConfigurationError(f"h={h:g} leaves fewer than 8 interior nodes along axis {k}")
    return grid


@dataclass(frozen=True, eq=False)
class Region:
    """A node set ``mask`` with a level field locating its continuous boundary.

    ``level`` is negative inside the region and is used to place the boundary
    on bonds that leave the region (linear interpolation), unless an exact
    level function ``exact`` of the coordinates is available.
    """

    grid: Grid
    mask: np.ndarray
    level: np.ndarray
    exact: Optional[Callable] = None
    name: str = ""

    @classmethod
    def from_domain(cls, grid: Grid, domain: ConvexDomain, name=""):
        if domain.dim != grid.dim:
            raise ConfigurationError("region and grid dimensions differ")
        level = domain.phi(grid.points)
        return cls(grid, level < 0, level, exact=domain.phi, name=name or domain.spec)

    @classmethod
    def ball(cls, grid: Grid, radius: float, center=None):
        center = tuple(center) if center is not None else tuple(grid.domain.center)
        dom = ConvexDomain("ball", (radius,) * grid.dim, center, spec=f"ball r={radius:g}")
        return cls.from_domain(grid, dom)

    @classmethod
    def from_level(cls, grid: Grid, level, name=""):
        level = np.asarray(level, dtype=float)
        return cls(grid, np.nan_to_num(level, nan=1.0) < 0, level, name=name)

    @property
    def volume(self):
        return float(self.mask.sum()) * self.grid.cell_volume

    def fraction(self, p_points, q_points, lp, lq, inward=False):
        """Fraction of each bond ``p -> q`` that lies before the region boundary.

        By default ``p`` is inside and ``q`` outside; ``inward=True`` handles
        bonds entering the region from outside.
        """
        if self.exact is not None:
            fn = self.exact if not inward else (lambda x: -self.exact(x))
            theta = bisect_segment(fn, p_points, q_points)
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                theta = lp / (lp - lq)
            theta = np.where(np.isfinite(theta), theta, 1.0)
        return np.clip(theta, MIN_FRACTION, 1.0)

    def interior_nodes(self, margin=1):
        """Nodes of the region whose ``margin``-neighborhood stays in the region."""
        return erode(self.mask, margin)


def _ball_footprint(dim, radius):
    r = int(radius)
    ax = np.arange(-r, r + 1)
    mesh = np.meshgrid(*([ax] * dim), indexing="ij")
    return sum(m**2 for m in mesh) <= radius**2 + 1e-9


def dilate(mask, radius):
    from scipy.ndimage import binary_dilation

    if radius <= 0:
        return mask.copy()
    return binary_dilation(mask, structure=_ball_footprint(mask.ndim, radius))


def erode(mask, radius):
    from scipy.ndimage import binary_erosion

    if radius <= 0:
        return mask.copy()
    return binary_erosion(mask, structure=_ball_footprint(mask.ndim, radius), border_value=0)


def compactly_contained(mask, container, margin=2):
    """True when ``mask`` dilated by ``margin`` nodes stays strictly inside ``container``.

    Strictly inside means: no node of the dilated set lies outside the container
    or on its boundary layer (container nodes with an axis neighbor outside).
    """
    inner = erode(container, 1)
    return bool(np.all(inner[dilate(mask, margin)]))


def integrate_region(grid: Grid, field, region) -> float:
    """Midpoint rule ``h^dim * sum(field)`` over the node set ``region``."""
    region = region.mask if isinstance(region, Region) else np.asarray(region, dtype=bool)
    if np.any(region & ~grid.inside):
        raise DomainError("integration region contains exterior nodes")
    vals = np.broadcast_to(np.asarray(field, dtype=float), grid.shape)[region]
    if not np.all(np.isfinite(vals)):
        raise DomainError("field is undefined on part of the integration region")
    return float(vals.sum()) * grid.cell_volume


def central_gradient(grid: Grid, field):
    """Centered-difference gradient, NaN wherever a stencil value is undefined."""
    field = np.asarray(field, dtype=float)
    out = np.full(field.shape + (grid.dim,), np.nan)
    for k in range(grid.dim):
        fwd = np.roll(field, -1, axis=k)
        bwd = np.roll(field, 1, axis=k)
        d = (fwd - bwd) / (2 * grid.h)
        edge = [slice(None)] * grid.dim
        edge[k] = [0, -1]
        d[tuple(edge)] = np.nan
        out[..., k] = d
    return out


def shell_width(grid: Grid, level_fn, level, factor=3.0, grad=None):
    """Shell width ``factor * h * max|grad level_fn|`` over the shell around the level set.

    The maximum is first taken over the endpoints of bonds crossing the level,
    then once more over the resulting shell.
    """
    if grad is None:
        grad = central_gradient(grid, level_fn)
    gnorm = np.linalg.norm(grad, axis=-1)
    p, q, _ = bond_crossings(grid, level_fn, level)
    ends = np.concatenate([p, q])
    vals = gnorm.ravel()[ends]
    vals = vals[np.isfinite(vals)]
    if vals.size == 0:
        raise DegenerateError(f"level {level:g} has no resolved crossings")
    width = factor * grid.h * float(vals.max())
    band = np.isfinite(gnorm) & (np.abs(np.nan_to_num(level_fn - level, nan=np.inf)) < 0.5 * width)
    if np.any(band):
        width = factor * grid.h * max(float(vals.max()), float(gnorm[band].max()))
    return width


def level_surface_integral(grid: Grid, density, level_fn, level, weight=None, factor=3.0, region=None):
    """Integral of ``density`` over the level surface ``{level_fn = level}``.

    Coarea form: the surface integral equals the volume integral of
    ``density * |grad level_fn| * K(level_fn - level)`` for a unit-mass kernel
    ``K`` concentrated near the level.  ``K`` is a raised cosine supported on a
    shell of total width ``factor * h * max|grad level_fn|`` centered on the
    level.  ``weight`` replaces ``|grad level_fn|`` when given.
    """
    level_fn = np.asarray(level_fn, dtype=float)
    valid = np.isfinite(level_fn)
    if region is not None:
        valid &= region.mask if isinstance(region, Region) else region
    if not np.any(valid):
        raise DegenerateError("level function undefined on the region")
    lo, hi = float(level_fn[valid].min()), float(level_fn[valid].max())
    if not lo < level < hi:
        raise DegenerateError(f"level {level:g} not strictly inside the range [{lo:g}, {hi:g}]")
    grad = central_gradient(grid, level_fn)
    width = shell_width(grid, np.where(valid, level_fn, np.nan), level, factor, grad)
    eps = 0.5 * width
    s = level_fn - level
    if weight is None:
        weight = np.linalg.norm(grad, axis=-1)
    weight = np.broadcast_to(np.asarray(weight, dtype=float), grid.shape)
    density = np.broadcast_to(np.asarray(density, dtype=float), grid.shape)
    shell = valid & (np.abs(np.nan_to_num(s, nan=np.inf)) < eps)
    shell &= np.isfinite(weight) & np.isfinite(density)
    if not np.any(shell):
        raise DegenerateError(f"empty shell around level {level:g}")
    kern = (1.0 + np.cos(np.pi * s[shell] / eps)) / (2.0 * eps)
    return float(np.sum(density[shell] * weight[shell] * kern)) * grid.cell_volume


def bond_crossings(grid: Grid, height, level, mask=None, offsets=None):
    """Bonds whose endpoints straddle ``{height = level}``.

    ``offsets`` lists the bond directions to scan (default: the axes, both
    signs are always scanned).  Returns ``(p, q, theta)``: flat indices of the
    inner endpoint (``height < level``), the outer endpoint, and the fraction
    of the bond at which the linear interpolant of ``height`` crosses ``level``.
    """
    from .operator import shift

    height = np.asarray(height, dtype=float)
    below = np.nan_to_num(height, nan=np.inf) < level
    if mask is not None:
        below &= mask
    if offsets is None:
        offsets = [tuple(int(k == j) for j in range(grid.dim)) for k in range(grid.dim)]
    flat_idx = np.arange(height.size).reshape(grid.shape)
    ps, qs, ts = [], [], []
    for e in offsets:
        for s in (1, -1):
            off = tuple(s * c for c in e)
            nb_h = shift(height, off)
            nb_i = shift(flat_idx.astype(float), off, fill=-1).astype(np.int64)
            cross = below & (nb_h >= level)
            if np.any(cross):
                hp, hq = height[cross], nb_h[cross]
                ps.append(flat_idx[cross])
                qs.append(nb_i[cross])
                ts.append((level - hp) / (hq - hp))
    if not ps:
        return np.array([], dtype=int), np.array([], dtype=int), np.array([])
    return np.concatenate(ps), np.concatenate(qs), np.concatenate(ts)


def values_on_level(grid: Grid, field, height, level, mask=None, offsets=None):
    """Values of ``field`` interpolated to the crossings of ``{height = level}``."""
    p, q, theta = bond_crossings(grid, height, level, mask, offsets)
    if p.size == 0:
        raise DegenerateError(f"level {level:g} has no resolved crossings")
    flat = np.asarray(field, dtype=float).ravel()
    vals = (1 - theta) * flat[p] + theta * flat[q]
    return vals[np.isfinite(vals)]
