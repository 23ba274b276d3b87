import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, derandomize=True)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def planar2():
    from manipulant.robots import load_robot

    return load_robot("planar2")


@pytest.fixture(scope="session")
def arm7():
    from manipulant.robots import load_robot

    return load_robot("arm7")
