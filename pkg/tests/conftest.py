from __future__ import annotations

import sys

import numpy as np
import pytest

from dispconvex.ensemble import map_threshold
from dispconvex.profile import Grid


@pytest.fixture(scope="session")
def th36():
    return map_threshold(3, 6)


@pytest.fixture(scope="session")
def ens36(th36):
    return th36.ensemble()


@pytest.fixture(scope="session")
def pm36(th36):
    return th36.p_map


@pytest.fixture(scope="session")
def grid():
    return Grid.default()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = next((m for name, m in list(sys.modules.items()) if name.rsplit(".", 1)[-1] == "test_acceptance"), None)
    lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
