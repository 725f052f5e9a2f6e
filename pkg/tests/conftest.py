import math
from functools import lru_cache

import numpy as np
import pytest

from epsmode.dielectric import DisorderSpec, Homogeneous, Layered, build_profile, generate_disorder
from epsmode.geometry import Grid
from epsmode.modes import solve_modes

BOX = (2 * math.pi,) * 3
LADDER_DIMS = (8, 1, 64)


def layered_grid() -> Grid:
    return Grid(LADDER_DIMS, BOX)


@lru_cache(maxsize=None)
def layered_profile():
    """Ideal profile: 1 -> 2.25 step at z = L/2 (and back at z = 0), ramp width L/16."""
    return build_profile(layered_grid(), Layered((1.0, 2.25), (math.pi,), 2 * math.pi / 16))


@lru_cache(maxsize=None)
def layered_modes():
    return solve_modes(layered_profile())


@lru_cache(maxsize=None)
def disordered_profile(seed: int, rms: float = 0.05):
    return generate_disorder(layered_profile(), DisorderSpec(seed, rms))


@lru_cache(maxsize=None)
def disordered_modes(seed: int, rms: float = 0.05):
    return solve_modes(disordered_profile(seed, rms))


@lru_cache(maxsize=None)
def small_profiles():
    """Homogeneous and disordered profiles on the dense-oracle grid (2, 1, 16)."""
    grid = Grid((2, 1, 16), BOX)
    base = build_profile(grid, Homogeneous(1.5))
    return base, generate_disorder(base, DisorderSpec(3, 0.05))


@pytest.fixture(scope="session")
def eps_layered():
    return layered_profile()


@pytest.fixture(scope="session")
def modes_layered():
    return layered_modes()


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
