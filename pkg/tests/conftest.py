import numpy as np
import pytest

from plmanifold.manifold import Manifold, cylinder_coords
from plmanifold.plm import PLMDataset


def random_cylinder_dataset(seed, n=40, p=2, noise=0.3, beta=None):
    """Smooth synthetic dataset on the unit cylinder for equivariance tests."""
    rng = np.random.default_rng(seed)
    angles = rng.uniform(0.0, 2.0 * np.pi, n)
    heights = rng.uniform(0.0, 1.0, n)
    t = cylinder_coords(angles, heights)
    x = rng.normal(0.0, 1.0, (n, p))
    if beta is None:
        beta = rng.normal(0.0, 1.0, p)
    g = np.cos(angles) + heights ** 2
    y = x @ beta + g + noise * rng.normal(0.0, 1.0, n)
    return PLMDataset(y, x, t, Manifold.cylinder((0.0, 1.0))), np.asarray(beta)


def random_weights(rng, n):
    w = rng.uniform(0.1, 1.0, n)
    return w / w.sum()


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
