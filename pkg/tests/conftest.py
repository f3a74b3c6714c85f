import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("thorough", max_examples=500, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def pyramid_params():
    from distatt.scenario import pyramid_preset

    return pyramid_preset().params


ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record the one-line verdict of an acceptance criterion."""

    def add(number, passed, detail):
        ACCEPTANCE_LINES.append((number, f"C{number:<2d} {'PASS' if passed else 'FAIL'}  {detail}"))

    return add


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
