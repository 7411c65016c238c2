from __future__ import annotations

import numpy as np
import pytest

from magreen.errors import ConfigurationError
from magreen.expr import Expression


def test_arithmetic_on_points():
    pts = np.array([[0.0, 0.0], [1.0, 2.0]])
    out = Expression("1 + 0.5*sin(4*x)*sin(4*y)").on_points(pts)
    assert out == pytest.approx([1.0, 1 + 0.5 * np.sin(4) * np.sin(8)])


def test_constant_broadcasts():
    assert Expression("2.5").on_points(np.zeros((3, 4, 2))).shape == (3, 4)


def test_step_uses_spacing():
    e = Expression("0.6 + 0.9*step(x, 4*h)")
    pts = np.array([[-1.0, 0.0], [0.0, 0.0], [1.0, 0.0]])
    out = e.on_points(pts, h=0.01)
    assert out == pytest.approx([0.6, 1.05, 1.5], abs=1e-12)


def test_names():
    assert Expression("x*z + pi").names == ["x", "z"]


@pytest.mark.parametrize("src", ["__import__('os')", "x.real", "open('f')", "lambda: 1", "'text'", "x if y else z", "foo + 1"])
def test_rejects_unsafe_or_unknown(src):
    with pytest.raises(ConfigurationError):
        Expression(src)


def test_missing_variable_in_low_dimension():
    with pytest.raises(ConfigurationError):
        Expression("z").on_points(np.zeros((2, 2)))
