"""Shared fixtures."""

import logging

import numpy as np
import pytest

from core import BinaryImage
from core.logging_utils import HANDLER_NAME, ROOT_LOGGER
from src.quantum_core import build_lab_state, build_linear_cluster

# 1 - 2 * 0.0959: pairwise key disagreement of 9.59 %
PAIRWISE_VISIBILITY = 0.8082


@pytest.fixture(autouse=True)
def _detach_console_handler():
    """The console handler holds the stderr of the test that configured it."""
    yield
    root = logging.getLogger(ROOT_LOGGER)
    for handler in [h for h in root.handlers if h.get_name() == HANDLER_NAME]:
        root.removeHandler(handler)


@pytest.fixture(scope="session")
def lab_state():
    return build_lab_state()


@pytest.fixture(scope="session")
def cluster4():
    return build_linear_cluster(4)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_image():
    """32x24 image with a filled square and a diagonal."""
    grid = np.zeros((24, 32), dtype=np.uint8)
    grid[4:12, 6:14] = 1
    for i in range(24):
        grid[i, i] = 1
    return BinaryImage(width=32, height=24, pixels=grid)
