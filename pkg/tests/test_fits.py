from __future__ import annotations

import json

import numpy as np
import pytest

from magreen.errors import InsufficientDataError
from magreen.fits import fit_linear, fit_power_law, observed_orders


def test_power_law_recovers_exponent():
    x = np.geomspace(0.01, 1, 6)
    rep = fit_power_law(x, 3 * x**-0.5)
    assert rep.slope == pytest.approx(-0.5)
    assert np.exp(rep.intercept) == pytest.approx(3)
    assert rep.r2 == pytest.approx(1)


def test_linear_fit_and_json():
    x = np.arange(5.0)
    rep = fit_linear(x, 2 * x + 1)
    assert (rep.slope, rep.intercept) == pytest.approx((2, 1))
    d = json.loads(rep.to_json())
    assert set(d) >= {"model", "slope", "intercept", "r2", "points"}


def test_too_few_points():
    with pytest.raises(InsufficientDataError):
        fit_linear([1, 2, 3], [1, 2, 3])


def test_nonpositive_power_data():
    with pytest.raises(InsufficientDataError):
        fit_power_law([1, 2, 3, 4], [1, -1, 1, 1])


def test_observed_orders_of_second_order_data():
    hs = [0.1, 0.05, 0.025]
    assert observed_orders(hs, [h**2 for h in hs]) == pytest.approx([2, 2])
