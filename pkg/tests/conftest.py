"""Shared fixtures: small random instances that every module can fit."""

import numpy as np
import pytest

from cmgl.weights import WeightSet


def make_weights(p, k, rng, norm=0.9):
    """k random symmetric zero-diagonal matrices with spectral norm norm."""
    mats = []
    for _ in range(k):
        a = rng.standard_normal((p, p))
        a = (a + a.T) / 2.0
        np.fill_diagonal(a, 0.0)
        top = np.max(np.abs(np.linalg.eigvalsh(a)))
        mats.append(a * (norm / top))
    return WeightSet.from_matrices(mats, p=p)


def sparse_bernoulli(p, k, rng, density=0.125):
    """k sparse symmetric 0/1 weight matrices, zero diagonal."""
    mats = []
    idx = np.triu_indices(p, 1)
    for _ in range(k):
        w = np.zeros((p, p))
        w[idx] = (rng.uniform(size=idx[0].shape[0]) < density).astype(float)
        mats.append(w + w.T)
    return WeightSet.from_matrices(mats)


def feasible_beta(link, k, rng, slope=0.25):
    """A coefficient vector keeping B within every link's feasible set.

    With each |beta_j| <= slope and unit-norm weight matrices, B stays
    within slope*k of the intercept, so an intercept of 2 keeps B PD for
    the links that need it and exp(B) bounded for the one that does not.
    """
    intercept = 0.6 if link == "exponential" else 2.0
    return np.concatenate([[intercept], rng.uniform(-slope, slope, k)])


@pytest.fixture
def rng():
    return np.random.default_rng(20260817)
