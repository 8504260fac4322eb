import numpy as np
import pytest
from hypothesis import settings

from weakkam import DiscreteAction, PeriodicGrid, estimate_bounds, pendulum, tabulate_kernel

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def make_kernel(model, tau, n, p=None, safety=1.5):
    action = DiscreteAction(model, tau, p if p is not None else (0.0,) * model.dimension)
    grid = PeriodicGrid(model.dimension, n)
    return tabulate_kernel(action, grid, estimate_bounds(action, safety=safety)), action


@pytest.fixture(scope="session")
def pend():
    return pendulum(1.0)


@pytest.fixture(scope="session")
def pend64(pend):
    return make_kernel(pend, 0.1, 64)[0]


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
