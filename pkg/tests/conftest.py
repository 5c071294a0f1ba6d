import warnings

import numpy as np
import pytest

from clmda.simulate import reference_population, gen_dataset


def simulated(N, family="dominance", R=4, C=3, seed=0):
    """(X, ds, theta) drawn from the built-in simulation population."""
    rng = np.random.default_rng(seed)
    return gen_dataset(reference_population(family), N, rng, R=R, C=C)


@pytest.fixture
def quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        yield
