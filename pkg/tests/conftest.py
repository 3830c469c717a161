import numpy as np
import pytest

from prefixtune.arch import gm20b
from prefixtune.backends import SimBackend


@pytest.fixture(scope="session")
def arch():
    return gm20b()


@pytest.fixture(scope="session")
def sim(arch):
    return SimBackend(arch)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
