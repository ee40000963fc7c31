import numpy as np
import pytest

from riverstab.discretization import Grid
from riverstab.profiles import parse_profile
from riverstab.scenario import CANONICAL, P1, P2


@pytest.fixture(scope="session")
def grid():
    return Grid(256)


@pytest.fixture(scope="session")
def p1():
    return parse_profile(P1[0]), parse_profile(P1[1])


@pytest.fixture(scope="session")
def p2():
    return parse_profile(P2[0]), parse_profile(P2[1])


@pytest.fixture(scope="session")
def canonical():
    return CANONICAL


def nodal(p, grid):
    return np.asarray(p(grid.nodes))


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[k].line())
