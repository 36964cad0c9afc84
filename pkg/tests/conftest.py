import numpy as np
import pytest

from parampriv.gauss_markov import GaussMarkovModel, GmParameter


def random_spd(rng, k, floor=0.1):
    B = rng.standard_normal((k, k))
    return B @ B.T / k + floor * np.eye(k)


def random_gm(rng, n=None, d=None, with_means=True):
    """A random stable, observable Gauss-Markov parameter."""
    n = n or int(rng.integers(1, 4))
    d = d or int(rng.integers(1, 4))
    while True:
        A = rng.standard_normal((n, n))
        A *= rng.uniform(0.2, 0.9) / max(abs(np.linalg.eigvals(A)))
        C = rng.standard_normal((d, n))
        obs = np.vstack([C @ np.linalg.matrix_power(A, i) for i in range(n)])
        if np.linalg.matrix_rank(obs) == n:
            break
    drift = rng.standard_normal(n) if with_means else None
    m0 = rng.standard_normal(n) * 3 if with_means else None
    return GmParameter(A, C, random_spd(rng, n), random_spd(rng, d), random_spd(rng, n),
                       drift, m0)


def random_gm_model(rng, n=None, d=None):
    return GaussMarkovModel(random_gm(rng, n, d))


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)
