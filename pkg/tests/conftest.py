import numpy as np
import pytest

from allwas.transport import DiscreteMeasure


def random_measure(rng, n, d, uniform=False):
    support = rng.standard_normal((n, d))
    if uniform:
        weights = np.full(n, 1.0 / n)
    else:
        w = rng.random(n) + 0.1
        weights = w / w.sum()
    return DiscreteMeasure(support, weights)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
