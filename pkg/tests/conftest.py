import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from darmix.dar import DarParams
from helpers import ACCEPTANCE_LINES

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

@pytest.fixture
def base_params():
    return DarParams([0.3], 1.0, [0.5])


@pytest.fixture
def dar2_params():
    return DarParams([0.3, 0.1], 1.0, [0.5, 0.2])


@pytest.fixture(autouse=True)
def _quiet_stationarity():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="estimated DAR parameters")
        with np.errstate(over="ignore"):
            yield


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
