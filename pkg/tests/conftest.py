import numpy as np
import pytest

from price_mfg.model import (AnalyticSupply, HamiltonianSpec, InitialDensity, SpaceGrid,
                             SupplySchedule, TerminalCost, TimeGrid)

ACCEPTANCE_LINES = []


def record(criterion, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def small_grids():
    return SpaceGrid(-4.0, 4.0, 81), TimeGrid(1.0, 20)


@pytest.fixture
def zero_supply():
    return SupplySchedule([0.0, 1.0], [0.0, 0.0])


@pytest.fixture
def day_supply():
    return AnalyticSupply.sinusoid(1.0, 2 * np.pi / 24.0, horizon=24.0)


@pytest.fixture
def lq_problem():
    """Reference one-day LQ problem (c = 2, unit supply amplitude)."""
    space, time = SpaceGrid(-2.0, 10.0, 201), TimeGrid(24.0, 480)
    spec = HamiltonianSpec(2.0)
    init = InitialDensity.gaussian(space, 0.0, 0.5)
    term = TerminalCost.quadratic(1.0, 0.0)
    Q = AnalyticSupply.sinusoid(1.0, 2 * np.pi / 24.0, horizon=24.0)
    return spec, term, init, Q, space, time
