import numpy as np
import pytest

import trielab as tl


@pytest.fixture(scope="session")
def env_iid():
    """i.i.d. letters with probabilities (0.7, 0.3)."""
    return tl.deterministic_env([[0.7, 0.3], [0.7, 0.3]])


@pytest.fixture(scope="session")
def env_uniform():
    return tl.deterministic_env([[0.5, 0.5], [0.5, 0.5]])


@pytest.fixture(scope="session")
def env_markov():
    return tl.deterministic_env([[0.9, 0.1], [0.2, 0.8]])


@pytest.fixture(scope="session")
def env_markov_b():
    return tl.deterministic_env([[0.7, 0.3], [0.4, 0.6]])


@pytest.fixture(scope="session")
def env_dirichlet():
    """Uniform-on-the-simplex rows: tilted moments 2/(1+theta)."""
    return tl.dirichlet_env([[1.0, 1.0], [1.0, 1.0]])


@pytest.fixture(scope="session")
def env_mixture():
    return tl.mixture_env(
        [0.5, 0.5],
        [[[0.5, 0.5], [0.5, 0.5]], [[0.9, 0.1], [0.9, 0.1]]],
    )
