import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from probfeedback.graph import ProbGraph
from probfeedback.harness import preset


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def cycle6():
    return preset("cycle6", delta=0.2)


@pytest.fixture(scope="session")
def random6():
    return preset("random6", best="A")


@pytest.fixture
def bandit_graph():
    """Three arms, each observing only itself with probability one."""
    return ProbGraph(3, [(i, i, 1.0) for i in range(3)])


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
