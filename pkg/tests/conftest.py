import numpy as np
import pytest

from ssgic.data import Dataset, standardize


def random_binary_dataset(rng, n, p, signal=1.0):
    x = rng.standard_normal((n, p))
    beta = np.zeros(p)
    beta[: min(2, p)] = signal
    eta = x @ beta
    y = (rng.random(n) < 1 / (1 + np.exp(-eta))).astype(float)
    if y.min() == y.max():
        y[0] = 1 - y[0]
    return Dataset(x, y)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_std(rng):
    return standardize(random_binary_dataset(rng, 80, 6))
