from fractions import Fraction

import pytest
from hypothesis import HealthCheck, settings

from gridbesov.grid_core import NAdicGrid, WeightedBinaryGrid
from gridbesov.stepfun import seeded_corpus

settings.register_profile(
    "repo",
    max_examples=40,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("repo")

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def dyadic():
    return NAdicGrid(2)


@pytest.fixture(scope="session")
def triadic():
    return NAdicGrid(3)


@pytest.fixture(scope="session")
def weighted():
    return WeightedBinaryGrid(Fraction(1, 5))


@pytest.fixture(scope="session")
def corpus(dyadic):
    return seeded_corpus(dyadic, count=100, depth=8)


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
