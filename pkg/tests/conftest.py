import numpy as np
import pytest

from gibbstrack.presets import iid_instance, markov_instance

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def iid_model():
    return iid_instance()


@pytest.fixture(scope="session")
def markov_model():
    return markov_instance()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
