from __future__ import annotations

import math

import numpy as np
import pytest

from magreen.errors import DomainError, NotCompactlyContainedError, ParameterError
from magreen.sections import build_section, dilate_section, doubling_report, volume_growth_report


def test_radial_section_is_a_disk(quad2):
    s = build_section(quad2, (0.0, 0.0), 0.08)
    assert s.volume == pytest.approx(math.pi * 2 * 0.08, rel=0.02)
    assert s.mu == pytest.approx(s.volume)
    assert np.allclose(s.com, 0, atol=1e-12)
    assert not s.snapped


def test_off_center_section_is_translated_disk(quad2):
    s = build_section(quad2, (0.25, -0.125), 0.02)
    assert np.allclose(s.com, [0.25, -0.125], atol=1e-12)


def test_volume_growth_exponent(quad2, quad3):
    rep = volume_growth_report(quad2, (0.0, 0.0), [0.01, 0.02, 0.04, 0.08])
    assert rep.slope == pytest.approx(1.0, abs=0.05)
    rep3 = volume_growth_report(quad3, (0.0, 0.0, 0.0), [0.04, 0.08, 0.16, 0.32])
    assert rep3.slope == pytest.approx(1.5, abs=0.1)


def test_snapping_flag(quad2):
    assert build_section(quad2, (0.001, 0.0), 0.02).snapped


def test_errors(quad2):
    with pytest.raises(ParameterError):
        build_section(quad2, (0.0, 0.0), 0.0)
    with pytest.raises(NotCompactlyContainedError):
        build_section(quad2, (0.0, 0.0), 0.7)
    with pytest.raises(DomainError):
        build_section(quad2, (1.19, 0.3), 0.01)


def test_dilation_scales_volume(quad2):
    s = build_section(quad2, (0.0, 0.0), 0.08)
    d = dilate_section(s, 0.5)
    assert d.volume == pytest.approx(s.volume / 4, rel=0.05)
    with pytest.raises(ParameterError):
        dilate_section(s, 1.5)


def test_doubling_constants_radial(quad2):
    rep = doubling_report(quad2, (0.0, 0.0), [0.02, 0.04, 0.08], alpha=0.5)
    # mu(S(2t)) / mu(S(t)) = 2 and mu(S(t)) / mu(S(t/2)/2) = 8 for a quadratic
    assert rep.beta_prime == pytest.approx(2, rel=0.05)
    assert rep.beta == pytest.approx(8, rel=0.1)
