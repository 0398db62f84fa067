import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from netiv import build_network  # noqa: E402


@pytest.fixture
def ring6():
    return build_network(6, [(i, (i + 1) % 6) for i in range(6)])


@pytest.fixture
def ring4():
    return build_network(4, [(0, 1), (1, 2), (2, 3), (3, 0)])


@pytest.fixture
def star3():
    return build_network(4, [(0, 1), (0, 2), (0, 3)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
