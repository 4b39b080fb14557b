import numpy as np
import pytest
from hypothesis import HealthCheck, settings

import kinbench as kb

settings.register_profile(
    "kinbench",
    max_examples=25,
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("kinbench")


@pytest.fixture
def two_state():
    return kb.DiscreteGenerator.from_matrix([[-1.0, 1.0], [1.0, -1.0]])


class Setup:
    def __init__(self, name, alpha, n, scheme="exponential-fitting"):
        self.spec, self.rho = kb.catalog_example(name, alpha)
        self.grid = kb.Grid.from_domain(self.spec.domain, n)
        self.Q = kb.build_qmatrix(self.spec, self.grid, scheme)
        self.x = self.grid.x
        self.w = self.grid.weights()


@pytest.fixture(scope="session")
def ou400():
    return Setup("ornstein-uhlenbeck", None, 400)


@pytest.fixture(scope="session")
def a2a401():
    return Setup("appendix2a", 1.0, 401)


@pytest.fixture(scope="session")
def a2a201():
    return Setup("appendix2a", 1.0, 201)


@pytest.fixture(scope="session")
def a2b400():
    return Setup("appendix2b", 1.0, 400)


def gaussian_measure(x, center, sigma):
    v = np.exp(-((x - center) ** 2) / (2 * sigma**2))
    return v / v.sum()
