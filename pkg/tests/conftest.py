import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240901)


def centered(rng, n, p):
    m = rng.standard_normal((n, p))
    return m - m.mean(axis=0)
