import os

import pytest
from hypothesis import HealthCheck, settings

from nhppgp.model import ModelParams
from nhppgp.policy import CostParams, PolicyParams

settings.register_profile(
    "suite", max_examples=200, deadline=None, derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "suite"))


@pytest.fixture
def crack():
    """Slow crack-growth setting in hours and millimetres."""
    return ModelParams.hpp(0.0002, 0.0004, 1.5, 1.1)


@pytest.fixture
def unit():
    return ModelParams.hpp(1.0, 1.0, 1.0, 1.01)


@pytest.fixture
def small_policy():
    return PolicyParams(T=3.0, T_r=1.0, M=2.0, L=8.0, k=0.95)


@pytest.fixture
def costs_a():
    return CostParams(50.0, 300.0, 400.0, 100.0)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
