import numpy as np
import pytest

from stationforge.core import ChargerSpec, PevSession, TimeGrid

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def hourly():
    return TimeGrid(0.0, 1.0, 24)


@pytest.fixture
def unit_charger():
    """eta = 1 keeps hand arithmetic exact."""
    return ChargerSpec(6.6, 1.0)


def session(i=0, t_arr=8.0, t_dep=12.0, soc_arr=0.4, soc_dep=0.95, **kw):
    return PevSession(i, t_arr, t_dep, soc_arr, soc_dep, **kw)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
