"""Small random instances shared by the unit tests."""

import numpy as np

from geoselect import SpatialDataset


def random_dataset(seed, n=20, p=2, side=3.0, theta=(1.0, 0.2, 2.0), beta=None):
    """Uniform sites on a square with a GP response drawn from ``theta``."""
    rng = np.random.default_rng(seed)
    coords = rng.uniform(0, side, size=(n, 2))
    X = rng.standard_normal((n, p))
    beta = np.arange(1, p + 1, dtype=float) if beta is None else np.asarray(beta, dtype=float)
    r, c, s2 = theta
    d = np.linalg.norm(coords[:, None] - coords[None], axis=-1)
    gamma = s2 * (1 - c) * np.exp(-d / r)
    np.fill_diagonal(gamma, s2)
    y = X @ beta + np.linalg.cholesky(gamma) @ rng.standard_normal(n)
    return SpatialDataset(coords, X, y)
