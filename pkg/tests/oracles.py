"""Brute-force reference solvers used as test oracles."""

import itertools

import numpy as np


def lasso_grid_search(X, y, weights, n_scale, tol=1e-6, points=21):
    """Minimize ``0.5|y - Xb|^2 + n_scale * sum w_j |b_j|`` by zooming grids.

    The objective is convex, so repeatedly re-centring a shrinking grid on
    its best point converges to the global minimizer.
    """
    p = X.shape[1]
    obj = lambda B: 0.5 * np.sum((y[None] - B @ X.T) ** 2, axis=1) + n_scale * np.abs(B) @ weights
    ols = np.linalg.lstsq(X, y, rcond=None)[0]
    center = np.zeros(p)
    half = 2.0 * np.abs(ols).max() + 1.0
    while half > tol:
        axes = [np.linspace(c - half, c + half, points) for c in center]
        axes = [np.unique(np.append(a, 0.0)) if a[0] <= 0 <= a[-1] else a for a in axes]
        B = np.array(list(itertools.product(*axes)))
        center = B[np.argmin(obj(B))]
        half *= 0.3
    return center
