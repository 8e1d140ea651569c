import numpy as np
import pytest

from zrplab.measures import solve_fugacity
from zrplab.rates import RateFunction


@pytest.fixture(scope="session")
def geometric():
    """Constant rate g = 1{k>=1}; the site marginal at density 1 is geometric."""
    return RateFunction.constant()


@pytest.fixture(scope="session")
def geo_measure(geometric):
    return solve_fugacity(geometric, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
