import numpy as np
import pytest

from streamaft.gehan import Dataset, MiniBatch


def random_batch(rng, k=None, p=None, index=1, censor_rate=0.3):
    k = k or int(rng.integers(2, 8))
    p = p or int(rng.integers(1, 4))
    return MiniBatch(
        index,
        rng.standard_normal(k),
        rng.random(k) > censor_rate,
        rng.standard_normal((k, p)),
    )


def random_dataset(rng, n, p, censor_rate=0.3):
    return Dataset(
        rng.standard_normal(n),
        rng.random(n) > censor_rate,
        rng.standard_normal((n, p)),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240824)


@pytest.fixture
def two_point_batch():
    """The canonical k=2 case: events at residuals 0 and 1, unit covariates."""
    return MiniBatch(
        1,
        np.array([0.0, 1.0]),
        np.array([True, True]),
        np.array([[1.0, 0.0], [0.0, 1.0]]),
    )
