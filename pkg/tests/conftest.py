import numpy as np
import pytest

from latentpriv.core_math import DiagonalGaussian, make_rng


@pytest.fixture
def rng():
    return make_rng(20240601, "tests")


def random_pair(rng, d, same_variance=False):
    mean_p = rng.normal(0, 0.5, d)
    mean_q = mean_p + rng.normal(0, 0.4 / np.sqrt(d), d)
    var_q = rng.uniform(0.5, 2.0, d)
    var_p = var_q.copy() if same_variance else var_q * np.exp(rng.uniform(-0.2, 0.2, d) / np.sqrt(d))
    return DiagonalGaussian(mean_p, var_p), DiagonalGaussian(mean_q, var_q)
