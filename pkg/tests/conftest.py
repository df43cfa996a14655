import numpy as np
import pytest

from robust_intensity.geometry import PointPattern, Window
from robust_intensity.randomness import substream


@pytest.fixture
def unit_window():
    return Window(2, 1.0)


@pytest.fixture
def stream():
    return substream(12345, 0)


def pattern_from(points, half_side=1.0):
    return PointPattern(np.asarray(points, dtype=float).reshape(-1, 2), Window(2, half_side))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
