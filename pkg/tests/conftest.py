import numpy as np
import pytest

from streameb.model import CountHistogram, Grid, MixingWeights

# One year of auto insurance claims for 9,461 policy holders; a standard
# benchmark histogram for count shrinkage methods.
ACCIDENT_PAIRS = [(0, 7840), (1, 1317), (2, 239), (3, 42), (4, 14), (5, 4), (6, 4), (7, 1)]


@pytest.fixture
def accident_histogram():
    return CountHistogram.from_pairs(ACCIDENT_PAIRS)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_weights(rng, points):
    """A random strictly positive pmf on the given support points."""
    grid = Grid(points)
    w = rng.dirichlet(np.ones(len(points)))
    w = np.maximum(w, 1e-12)
    return MixingWeights(grid, w / w.sum())
