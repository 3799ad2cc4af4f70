import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gridiql.grid_env import GridMap

settings.register_profile("default", max_examples=200, deadline=None)
settings.register_profile(
    "thorough", max_examples=10_000, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow replication tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def empty5():
    return GridMap.empty(5, 5)


@pytest.fixture
def wall3():
    """3x3 map whose middle column is blocked except at the top."""
    return GridMap.from_obstacle_coords(3, 3, [(2, 1), (2, 2)], start=(1, 1), goal=(3, 1))
