import os
import pathlib
import sys

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

from cdfit.kernels import BlockDistribution  # noqa: E402
from cdfit.models import BinaryPairwiseModel, ErgmModel  # noqa: E402

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

LADDER_EDGES = [(0, 1), (1, 2), (2, 3), (4, 5), (5, 6), (6, 7), (0, 4), (1, 5), (2, 6), (3, 7)]
LADDER_Y = np.array([0, 0, 0, 1, 0, 0, 1, 1], dtype=np.uint8)
ROOT = pathlib.Path(__file__).resolve().parent.parent


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def ladder():
    return BinaryPairwiseModel.homogeneous(8, LADDER_EDGES)


@pytest.fixture
def ladder_y():
    return LADDER_Y.copy()


@pytest.fixture
def ladder_pairs():
    return BlockDistribution.uniform(LADDER_EDGES)


@pytest.fixture
def ergm4():
    """4 nodes, 6 dyads, every statistic and a degree cap of 2."""
    return ErgmModel(4, ("edges", "isolates", "nodematch", "gwesp"), grades=[0, 0, 1, 1],
                     alpha=2 / 3, degree_cap=2)


@pytest.fixture
def ergm6():
    return ErgmModel(6, ("edges", "isolates", "nodematch", "gwesp"),
                     grades=[0, 1, 0, 1, 0, 1], alpha=2 / 3)


@pytest.fixture
def root():
    return ROOT


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.LINES:
        terminalreporter.write_line(line)
