import numpy as np
import pytest

from handretarget.geometry import CameraIntrinsics, calibration_preset
from handretarget.io import bundled_chain

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def chain():
    return bundled_chain()


@pytest.fixture
def intrinsics():
    return CameraIntrinsics(fx=600.0, fy=600.0, cx=320.0, cy=240.0, width=640, height=480)


@pytest.fixture(scope="session")
def calibration():
    return calibration_preset("so_arm101_glasses")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
