"""Least-squares fits used to read exponents and logarithmic rates off sweeps."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .errors import InsufficientDataError

MIN_POINTS = 4


@dataclass
class FitReport:
    """Result of a one-variable linear fit.

    ``model`` is ``"power"`` (fit of ``log y`` against ``log x``) or
    ``"linear"`` (fit of ``y`` against ``x``).  ``points`` keeps the raw
    ``(x, y)`` pairs; ``extras`` holds anything operation specific.
    """

    model: str
    slope: float
    intercept: float
    r2: float
    points: list
    extras: dict = field(default_factory=dict)

    def to_dict(self):
        d = asdict(self)
        d["points"] = [[float(a), float(b)] for a, b in self.points]
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def _linregress(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < MIN_POINTS:
        raise InsufficientDataError(f"need at least {MIN_POINTS} points for a fit, got {len(x)}")
    res = stats.linregress(x, y)
    return float(res.slope), float(res.intercept), float(res.rvalue**2)


def fit_power_law(x, y, **extras) -> FitReport:
    """Fit ``y = C x^slope`` by least squares in log-log coordinates."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x <= 0) or np.any(y <= 0):
        raise InsufficientDataError("power-law fit needs positive data")
    slope, icpt, r2 = _linregress(np.log(x), np.log(y))
    return FitReport("power", slope, icpt, r2, list(zip(x.tolist(), y.tolist())), dict(extras))


def fit_linear(x, y, **extras) -> FitReport:
    """Fit ``y = slope * x + intercept``."""
    slope, icpt, r2 = _linregress(x, y)
    return FitReport("linear", slope, icpt, r2, list(zip(np.asarray(x, float).tolist(), np.asarray(y, float).tolist())), dict(extras))


def observed_orders(hs, errors):
    """Observed convergence orders ``log(e_k/e_{k+1}) / log(h_k/h_{k+1})`` between successive grids."""
    hs = np.asarray(hs, dtype=float)
    e = np.asarray(errors, dtype=float)
    return (np.log(e[:-1] / e[1:]) / np.log(hs[:-1] / hs[1:])).tolist()
