import numpy as np
import pytest
from hypothesis import settings

from weightlab.grid import DyadicGrid, Field

settings.register_profile("weightlab", max_examples=40, deadline=None)
settings.load_profile("weightlab")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def scalar(values, depth=None, dim=1):
    values = np.asarray(values, dtype=float)
    if depth is None:
        depth = int(round(np.log2(len(values)) / dim))
    return Field(DyadicGrid(dim, depth), values)


def matrix(values, depth=None, dim=1):
    values = np.asarray(values, dtype=float)
    if depth is None:
        depth = int(round(np.log2(len(values)) / dim))
    return Field(DyadicGrid(dim, depth), values, "matrix")


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
