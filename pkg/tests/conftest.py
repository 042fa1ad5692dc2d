import numpy as np
import pytest

from dualfluoro import phantom


@pytest.fixture(scope="session")
def system():
    return phantom.dual_system()


@pytest.fixture(scope="session")
def landmarks():
    return phantom.skull_landmarks()


@pytest.fixture(scope="session")
def volume():
    return phantom.skull_volume(64)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)



ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
