import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

from v2tomo.model import BinaryImage  # noqa: E402
from v2tomo.problem import instance_from_image  # noqa: E402

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

GLIDER = [[0, 1, 0], [0, 0, 1], [1, 1, 1]]


@pytest.fixture
def glider_image():
    return BinaryImage.from_array(GLIDER)


@pytest.fixture
def glider(glider_image):
    return instance_from_image(glider_image, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
