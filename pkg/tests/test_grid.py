from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from magreen.errors import ConfigurationError, DomainError, ParameterError
from magreen.grid import (
    BOUNDARY_ADJACENT,
    EXTERIOR,
    INTERIOR,
    Region,
    bisect_segment,
    build_grid,
    compactly_contained,
    integrate_region,
    level_surface_integral,
    parse_domain,
)


def test_too_coarse_grid():
    with pytest.raises(ConfigurationError):
        build_grid(parse_domain("disk:1.0"), 0.5)


def test_nonpositive_spacing():
    with pytest.raises(ParameterError):
        build_grid(parse_domain("disk:1.0"), 0.0)


@pytest.mark.parametrize("spec,area", [("disk:1.0", math.pi), ("ellipse:1,0.5", math.pi * 0.5)])
def test_interior_count_matches_area(spec, area):
    h = 1 / 64
    g = build_grid(parse_domain(spec), h)
    assert g.inside.sum() == pytest.approx(area / h**2, rel=0.02)


def test_node_count_matches_bbox():
    g = build_grid(parse_domain("ellipse:1,0.5"), 1 / 32)
    lo, hi = g.bbox
    assert all(abs(n - ((b - a) / g.h + 1)) <= 1 for n, a, b in zip(g.shape, lo, hi))


def test_classification_consistent():
    g = build_grid(parse_domain("disk:1.0"), 1 / 16)
    assert np.all(g.phi[g.inside] < 0)
    assert set(np.unique(g.kind)) == {EXTERIOR, INTERIOR, BOUNDARY_ADJACENT}
    # strict interior nodes have every axis neighbor inside
    for k in range(2):
        for s in (1, -1):
            assert np.all(np.roll(g.inside, -s, axis=k)[g.kind == INTERIOR])
    # boundary-adjacent nodes have at least one exterior axis neighbor
    touching = np.zeros(g.shape, bool)
    for k in range(2):
        for s in (1, -1):
            touching |= ~np.roll(g.inside, -s, axis=k)
    assert np.all(touching[g.kind == BOUNDARY_ADJACENT])


def test_phi_signs():
    for spec in ["disk:1", "ellipse:1,0.5", "superellipse:4", "ball:1", "ellipsoid:1,0.8,0.6@0.1,0,0"]:
        dom = parse_domain(spec)
        g = build_grid(dom, dom.inradius / 8)
        assert dom.phi(np.asarray(dom.center)[None])[0] < 0
        lo, hi = g.bbox
        assert dom.phi(lo[None])[0] > 0 and dom.phi(hi[None])[0] > 0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=4, max_size=4), st.sampled_from(["disk:1", "ellipse:1,0.4", "superellipse:6"]))
def test_midpoints_of_interior_points_are_interior(coords, spec):
    dom = parse_domain(spec)
    a, b = np.array(coords[:2]), np.array(coords[2:])
    if dom.phi(a[None])[0] < 0 and dom.phi(b[None])[0] < 0:
        assert dom.phi(((a + b) / 2)[None])[0] < 0


def test_malformed_domain():
    with pytest.raises(ConfigurationError):
        parse_domain("triangle:1")
    with pytest.raises(ConfigurationError):
        parse_domain("disk:abc")


def test_integrate_region_midpoint_rule():
    g = build_grid(parse_domain("disk:1.0"), 1 / 64)
    assert integrate_region(g, np.ones(g.shape), g.inside) == pytest.approx(g.h**2 * g.inside.sum())
    assert integrate_region(g, np.ones(g.shape), g.inside) == pytest.approx(math.pi, rel=0.02)


def test_integrate_region_rejects_exterior():
    g = build_grid(parse_domain("disk:1.0"), 1 / 16)
    with pytest.raises(DomainError):
        integrate_region(g, np.ones(g.shape), np.ones(g.shape, bool))


def test_bisect_segment_on_circle():
    fn = lambda p: np.sum(p**2, axis=-1) - 1
    s = bisect_segment(fn, np.array([[0.5, 0.0], [0.0, 0.9]]), np.array([[1.5, 0.0], [0.0, 1.1]]))
    assert s == pytest.approx([0.5, 0.5])


def test_level_surface_integral_gives_perimeter():
    g = build_grid(parse_domain("disk:1.0"), 1 / 64)
    r = np.linalg.norm(g.points, axis=-1)
    assert level_surface_integral(g, 1.0, r, 0.5) == pytest.approx(math.pi, rel=0.01)


def test_compact_containment():
    g = build_grid(parse_domain("disk:1.0"), 1 / 32)
    small = Region.ball(g, 0.5)
    big = Region.ball(g, 0.97)
    assert compactly_contained(small.mask, g.inside)
    assert not compactly_contained(big.mask, g.inside)


def test_nearest_index_outside_grid():
    g = build_grid(parse_domain("disk:1.0"), 1 / 16)
    with pytest.raises(DomainError):
        g.nearest_index((5.0, 0.0))
