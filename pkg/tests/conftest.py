import numpy as np
import pytest

from liestats.liegroup import SE3, SO3, Euclidean, GLPlus

# lines collected by test_acceptance.py, printed in the terminal summary
ACCEPTANCE_LINES = []

GROUPS = {
    "SO3": SO3(),
    "SE3": SE3(),
    "GLplus3": GLPlus(3),
    "GLplus2": GLPlus(2),
    "R3": Euclidean(3),
}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(params=sorted(GROUPS))
def group(request):
    return GROUPS[request.param]


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
