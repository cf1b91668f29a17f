import numpy as np
import pytest
from hypothesis import strategies as st

from evodyn.measures import DiscreteMeasure

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_measure(rng, max_points=8):
    k = int(rng.integers(1, max_points + 1))
    return DiscreteMeasure(rng.random(k), rng.random(k) + 1e-3)


@st.composite
def measures(draw, max_points=6):
    k = draw(st.integers(1, max_points))
    pts = draw(st.lists(st.floats(0, 1), min_size=k, max_size=k))
    w = draw(st.lists(st.floats(1e-3, 1), min_size=k, max_size=k))
    return DiscreteMeasure(pts, w)


@st.composite
def simplex_points(draw, min_n=2, max_n=20):
    n = draw(st.integers(min_n, max_n))
    w = np.array(draw(st.lists(st.floats(0, 1), min_size=n, max_size=n)))
    if w.sum() == 0:
        w[0] = 1.0
    return w / w.sum()
