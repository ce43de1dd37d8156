import numpy as np
import pytest

from pathbench.dynamics import VehicleParams


@pytest.fixture(scope="session")
def params():
    return VehicleParams()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
