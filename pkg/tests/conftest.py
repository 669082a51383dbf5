import os
import sys

import numpy as np
import pytest

# Add the parent directory (and scripts/) to the path to import modules
ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.append(ROOT)
sys.path.append(os.path.join(ROOT, "scripts"))

from equilearn.config import settings
from equilearn.dependencies import make_rng, shutdown_executor
from equilearn.services.bayes_game import BayesianGame, random_game
from seed_example_games import matching_pennies, type_matching_bne, type_matching_game


@pytest.fixture
def rng():
    return make_rng(12345)


@pytest.fixture
def pennies() -> BayesianGame:
    return matching_pennies()


@pytest.fixture
def matching_game() -> BayesianGame:
    return type_matching_game()


@pytest.fixture
def matching_bne():
    return type_matching_bne()


@pytest.fixture
def small_random_game() -> BayesianGame:
    return random_game((2, 2), (2, 2), make_rng(2024))


@pytest.fixture
def threads(monkeypatch):
    """Set EQUILEARN_THREADS for one test and restore the single-threaded pool afterwards."""
    def set_threads(count: int):
        shutdown_executor()
        monkeypatch.setattr(settings, "threads", count)
    yield set_threads
    shutdown_executor()


def correlated_types_game() -> BayesianGame:
    """Two players with correlated types: rho = [[0.1, 0.3], [0.6, 0.0]]."""
    prior = np.array([[0.1, 0.3], [0.6, 0.0]])
    rng = make_rng(99)
    utilities = tuple(rng.random((2, 2, 2, 2)) for _ in range(2))
    return BayesianGame((2, 2), (2, 2), prior, utilities)
