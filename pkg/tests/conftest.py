import itertools

import numpy as np
import pytest
from scipy.optimize import linprog
from scipy.spatial.distance import cdist

from wasserstein_consensus.measures import AtomicMeasure, uniform_measure


def brute_force_cost(x, y):
    """Minimum mean squared displacement over all permutations (equal uniform weights)."""
    x = np.asarray(x, dtype=float).reshape(len(x), -1)
    y = np.asarray(y, dtype=float).reshape(len(y), -1)
    C = cdist(x, y, "sqeuclidean")
    n = len(x)
    return min(C[np.arange(n), list(p)].sum() for p in itertools.permutations(range(n))) / n


def lp_cost(mu: AtomicMeasure, nu: AtomicMeasure) -> float:
    """Transport cost from a dense LP solved by HiGHS."""
    C = cdist(mu.points, nu.points, "sqeuclidean")
    m, n = C.shape
    A = np.zeros((m + n, m * n))
    for i in range(m):
        A[i, i * n:(i + 1) * n] = 1.0
    for j in range(n):
        A[m + j, j::n] = 1.0
    b = np.concatenate([mu.weights, nu.weights])
    res = linprog(C.ravel(), A_eq=A, b_eq=b, bounds=(0, None), method="highs")
    assert res.status == 0
    return float(res.fun)


def random_measure(rng, n, d, uniform=True):
    pts = rng.standard_normal((n, d))
    if uniform:
        return uniform_measure(pts)
    w = rng.uniform(0.1, 1.0, n)
    return AtomicMeasure(pts, w / w.sum())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
