import sys

import pytest

from punctured_dynamics.dsl import compile_map
from punctured_dynamics.orbit import ClassifyParams
from punctured_dynamics.raster import ViewWindow, classify_grid
from punctured_dynamics.sphere import PunctureSet

EXPZ = "exp(z+1/z)"
REMARK = "exp(exp(1/z)+z)"


@pytest.fixture(scope="session")
def S0():
    return PunctureSet([0])


@pytest.fixture(scope="session")
def expz(S0):
    return compile_map(EXPZ, S0)


@pytest.fixture(scope="session")
def remark(S0):
    return compile_map(REMARK, S0)


@pytest.fixture(scope="session")
def acceptance_window():
    return ViewWindow(0j, 6.0, 6.0, 512, 512)


@pytest.fixture(scope="session")
def acceptance_params():
    return ClassifyParams(R_start=3.0, max_depth=32, bounded_threshold=2.5)


@pytest.fixture(scope="session")
def expz_rasters(expz, acceptance_window, acceptance_params):
    """512x512 rasters of f and f^2 over [-3,3]^2, shared by the raster-level checks."""
    return {
        1: classify_grid(expz, acceptance_window, acceptance_params),
        2: classify_grid(expz.compose(2), acceptance_window, acceptance_params),
    }


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for number in sorted(results):
            terminalreporter.write_line(results[number])
