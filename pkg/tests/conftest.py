import numpy as np
import pytest

from deadoil import builtin_model, create_grid

ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def smooth():
    return builtin_model("smooth_bounded")


@pytest.fixture(scope="session")
def unit3():
    return create_grid(3, 3, 1.0, 1.0)


def bump(cx=0.4, cy=0.6, radius=0.12, amplitude=20.0):
    return lambda x, y: amplitude * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2 * radius ** 2))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
