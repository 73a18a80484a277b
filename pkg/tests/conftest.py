import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from memxbar.activation import scaled_sigmoid, tanh
from memxbar.device import arctan_device
from memxbar.oracle import academic_spec

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ACCEPTANCE_LINES = []


def record_criterion(number, name, passed, detail):
    line = f"criterion {number:>2} [{'PASS' if passed else 'FAIL'}] {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)


@pytest.fixture
def dev():
    return arctan_device()


@pytest.fixture
def act():
    return tanh()


@pytest.fixture
def ssig():
    return scaled_sigmoid()


@pytest.fixture
def academic():
    return academic_spec()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
