import numpy as np
import pytest


def random_spd(rng, m, spread=1.0):
    """Well-conditioned random SPD matrix: random rotation, log-eigenvalues in +-spread."""
    a = rng.standard_normal((m, m))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    eigs = np.exp(rng.uniform(-spread, spread, size=m))
    return q @ np.diag(eigs) @ q.T


def random_sym(rng, m, scale=1.0):
    a = rng.standard_normal((m, m))
    return scale * 0.5 * (a + a.T)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
