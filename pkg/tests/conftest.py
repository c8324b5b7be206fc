import logging

import pytest


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "slow: pipeline tests that trace graphs or scan energies"
    )


@pytest.fixture(autouse=True)
def _quiet_matplotlib():
    logging.getLogger("matplotlib").setLevel(logging.WARNING)
    yield
