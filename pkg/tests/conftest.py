import math

import numpy as np
import pytest

from deltarobot.robot_model import ROLLING_ANGLE, default_model

# lines collected by the acceptance module, shown after the run
ACCEPTANCE_LINES: list[str] = []

TRIANGLE = (ROLLING_ANGLE, ROLLING_ANGLE)


@pytest.fixture(scope="session")
def model():
    return default_model()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_rotation(rng):
    axis = rng.normal(size=3)
    from deltarobot.geometry import axis_angle

    return axis_angle(axis, rng.uniform(-math.pi, math.pi))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
