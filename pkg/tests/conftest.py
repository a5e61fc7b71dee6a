import itertools

import numpy as np
import pytest

from roughstab import TimeGrid, lift_piecewise_linear, sample_fbm


def fbm_lift(hurst, n, dim=1, seed=0, t1=1.0):
    grid = TimeGrid.uniform(0.0, t1, n)
    path = sample_fbm(hurst, grid, dim=dim, seed=seed)
    return path, lift_piecewise_linear(path)


def pvar_bruteforce(values, p):
    """Exhaustive supremum over all partitions (small n only)."""
    n = values.shape[0] - 1
    best = 0.0
    interior = list(range(1, n))
    for r in range(len(interior) + 1):
        for combo in itertools.combinations(interior, r):
            idx = [0, *combo, n]
            total = 0.0
            for a, b in zip(idx[:-1], idx[1:]):
                total += np.linalg.norm(values[b] - values[a]) ** p
            best = max(best, total)
    return best ** (1.0 / p)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260823)
