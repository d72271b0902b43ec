import pytest

from pvservo.perception import identify_line_model
from pvservo.plant import CameraRig
from pvservo.scene import PvScene


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", help="run slow closed-loop scenarios")


def pytest_runtest_setup(item):
    if "slow" in item.keywords and not item.config.getoption("--runslow"):
        pytest.skip("need --runslow option to run")


@pytest.fixture(scope="session")
def line_model():
    """Line-feature model identified from a short excitation flight over the default array"""
    return identify_line_model(PvScene(), CameraRig(), period=0.05, duration=10.0)
