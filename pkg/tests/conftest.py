import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from chemolab.elliptic import HelmholtzOperator
from chemolab.grid import build_grid

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def disk64():
    return build_grid("disk", 64)


@pytest.fixture(scope="session")
def disk256():
    g = build_grid("disk", 256)
    return g, HelmholtzOperator(g)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
