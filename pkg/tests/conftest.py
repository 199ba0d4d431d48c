import sys

import numpy as np
import pytest
from hypothesis import settings

from emiinv import LayeredEarthModel, cmd_explorer

settings.register_profile("default", max_examples=50, deadline=None)
settings.load_profile("default")


@pytest.fixture
def device():
    return cmd_explorer()


@pytest.fixture
def vertical_device():
    return cmd_explorer(orientations=(0,))


@pytest.fixture
def three_layer():
    return LayeredEarthModel([0.0, 0.8, 1.9], [0.05, 0.6, 0.2])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance verdicts after the test report."""
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
