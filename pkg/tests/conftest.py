import numpy as np
import pytest

from msvou.ou_wishart import initial_params, step_a_params


@pytest.fixture(scope="session")
def step_a():
    return step_a_params()


@pytest.fixture(scope="session")
def step_a_model(step_a):
    return step_a.to_model()


@pytest.fixture(scope="session")
def initial():
    return initial_params()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def within_se(estimate, se, target, k=3.0):
    return abs(estimate - target) <= k * se
