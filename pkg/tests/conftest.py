import numpy as np
import pytest

from hybridmc.targets import standard_normal, toy_mixture


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def toy():
    return toy_mixture()


@pytest.fixture(scope="session")
def normal1d():
    return standard_normal(1)
