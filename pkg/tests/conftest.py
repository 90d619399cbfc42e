import sys

import numpy as np
import pytest

from simcomm.geometry import ChannelSet, SimGeometry


@pytest.fixture(scope="session")
def small_geom():
    return SimGeometry(2, 4, 4)


@pytest.fixture(scope="session")
def small_channels(small_geom):
    return ChannelSet.build(small_geom)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)



def pytest_terminal_summary(terminalreporter):
    mod = next((m for name, m in sys.modules.items() if name.endswith("test_acceptance")), None)
    report = getattr(mod, "REPORT", None)
    if report:
        terminalreporter.section("acceptance criteria")
        for n in sorted(report):
            terminalreporter.write_line(report[n])
