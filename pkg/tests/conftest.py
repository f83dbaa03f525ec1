import numpy as np
import pytest

from fiberlab.covariance import make_gaussian_model, make_triangular_model


@pytest.fixture(scope="session")
def gauss():
    return make_gaussian_model(1, 1.0, 1.0)


@pytest.fixture(scope="session")
def tri():
    return make_triangular_model(1.0, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
