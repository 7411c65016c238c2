from __future__ import annotations

import numpy as np
import pytest

from magreen.grid import parse_domain
from magreen.solver import DensitySpec, potential_from_function, solve_monge_ampere


def quadratic(points):
    return 0.5 * np.sum(points**2, axis=-1)


@pytest.fixture(scope="session")
def quad2():
    """u = |x|^2/2 on the disk of radius 1.2, h = 1/64."""
    return potential_from_function(parse_domain("disk:1.2"), 1 / 64, quadratic, "quad")


@pytest.fixture(scope="session")
def quad2_coarse():
    return potential_from_function(parse_domain("disk:1.2"), 1 / 32, quadratic, "quad")


@pytest.fixture(scope="session")
def quad3():
    """u = |x|^2/2 on the ball of radius 1.2, h = 1/16."""
    return potential_from_function(parse_domain("ball:1.2"), 1 / 16, quadratic, "quad")


@pytest.fixture(scope="session")
def osc2():
    dens = DensitySpec.from_expression("1 + 0.5*sin(4*x)*sin(4*y)", 0.5, 1.5)
    return solve_monge_ampere(parse_domain("disk:1.4142135623730951"), dens, 1 / 32)
