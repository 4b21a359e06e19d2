import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gfa.ctmc import GeneratorMatrix

settings.register_profile(
    "default",
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


def random_generator(n, density=0.5, seed=0, symmetric=False):
    """Random connected generator: a ring plus random extra edges."""
    rng = np.random.default_rng(seed)
    a = rng.uniform(0.1, 2.0, size=(n, n)) * (rng.random((n, n)) < density)
    ring = np.roll(np.eye(n), 1, axis=1) * rng.uniform(0.1, 2.0, size=(n, 1))
    a = a + ring
    if symmetric:
        a = a + a.T
    np.fill_diagonal(a, 0.0)
    return GeneratorMatrix.from_dense(a)


@pytest.fixture
def two_state():
    return GeneratorMatrix.from_dense([[-1.0, 1.0], [2.0, -2.0]])
