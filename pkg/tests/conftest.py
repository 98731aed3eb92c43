import math

import pytest

from evload import TimeGrid
from evload.analytic import ChargerModel
from evload.distributions import Exponential, Gaussian, Uniform, match_moments

ARRIVAL = Gaussian(19.0, math.sqrt(10.0))
MATCH_MEAN, MATCH_VAR = 6.0, 25.0 / 3.0


def charging_families():
    """The four charging-time laws of the comparison study."""
    return {
        "uniform": Uniform(1.0, 11.0),
        "exponential": Exponential(1.0 / 6.0),
        "truncated_gaussian": match_moments("truncated_gaussian", MATCH_MEAN, MATCH_VAR),
        "rician": match_moments("rician", MATCH_MEAN, MATCH_VAR),
    }


@pytest.fixture(scope="session")
def families():
    return charging_families()


@pytest.fixture
def fine_grid():
    return TimeGrid(24.0, 0.1)


@pytest.fixture
def hourly():
    return TimeGrid(24.0, 1.0)


@pytest.fixture
def uniform_model():
    return ChargerModel(1.0, ARRIVAL, Uniform(1.0, 11.0))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
