import numpy as np
import pytest

from crossim.core import Element, GroupSample, WeightedEuclideanMetric


@pytest.fixture
def unit1():
    return WeightedEuclideanMetric(np.ones(1))


def line_sample(values, group=0):
    return GroupSample(group, np.asarray(values, dtype=np.float64).reshape(-1, 1))


def elem(group, index, *features):
    return Element(group, index, np.asarray(features, dtype=np.float64))


# Acceptance criteria register one line each; printed after the run.
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
