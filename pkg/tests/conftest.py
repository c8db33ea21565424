import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lorentz_ns.grid import Grid
from lorentz_ns.initial_data import taylor_green
from lorentz_ns.mild import SolverConfig, solve_mild

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

TWO_PI = 2 * math.pi


def philox(seed: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed))


@pytest.fixture(scope="session")
def grid64() -> Grid:
    return Grid(2, 64, TWO_PI)


@pytest.fixture(scope="session")
def tg_trajectory(grid64):
    """Taylor-Green at N = 64, dt = 1e-3, T = 1 (shared by several modules)."""
    return solve_mild(taylor_green(grid64), SolverConfig(dt=1e-3, T=1.0))


@pytest.fixture(scope="session")
def tg_short(grid64):
    return solve_mild(taylor_green(grid64), SolverConfig(dt=1e-2, T=0.5))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
