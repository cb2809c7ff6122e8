import zlib

import numpy as np
import pytest

import nlperim as nl


@pytest.fixture(scope="session")
def small2d():
    """Ball of radius 1/2 in a [-1,1]^2 box, h = 1/16, indicator kernel R = 1/2."""
    dom = nl.domain_ball([0.0, 0.0], 0.5, margin=0.5)
    grid = nl.make_grid(dom, 1.0 / 16)
    k = nl.indicator_kernel(2, 0.5)
    H = nl.indicator_halfspace(grid, [0.0, 1.0], 0.0)
    return dom, grid, k, H


@pytest.fixture(scope="session")
def small1d():
    dom = nl.domain_ball([0.0], 1.0, margin=1.0)
    grid = nl.make_grid(dom, 1.0 / 32)
    k = nl.indicator_kernel(1, 1.0)
    H = nl.indicator_halfspace(grid, [1.0], 0.0)
    return dom, grid, k, H


@pytest.fixture(scope="session")
def accept64():
    """The acceptance setting: unit ball, indicator kernel R = 1, h = 1/64."""
    dom = nl.domain_ball([0.0, 0.0], 1.0, margin=1.0)
    grid = nl.make_grid(dom, 1.0 / 64)
    k = nl.indicator_kernel(2, 1.0)
    H = nl.indicator_halfspace(grid, [0.0, 1.0], 0.0)
    eng = nl.get_engine(dom, k, grid)
    return dom, grid, k, H, eng


def rng_for(name: str) -> np.random.Generator:
    return np.random.default_rng(zlib.crc32(name.encode()))
