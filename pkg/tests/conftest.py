import numpy as np
import pytest

from uavplan.config import ENVIRONMENTS, SystemParams


@pytest.fixture
def urban():
    return ENVIRONMENTS["urban"]


@pytest.fixture
def params():
    return SystemParams()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
