import numpy as np
import pytest

from snlab.spectral import axisymmetric_grid, build_grid, planar_grid
from snlab.stationary import axi_stationary, spherical_stationary


@pytest.fixture(scope="session")
def ground256():
    return spherical_stationary(0, build_grid(256, 100.0))


@pytest.fixture(scope="session")
def ground128():
    return spherical_stationary(0, build_grid(128, 100.0))


@pytest.fixture(scope="session")
def axi_ground_small():
    return axi_stationary((0, 0), axisymmetric_grid(32, 100.0, 12))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_planar():
    return planar_grid(24, 40.0)


ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def report():
    """Record one acceptance line; all lines are repeated in the terminal summary."""

    def emit(tag, ok, detail):
        line = f"{tag} {'PASS' if ok else 'FAIL'} {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][2:])):
            terminalreporter.write_line(line)
