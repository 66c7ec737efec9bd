"""Shared fixtures for the MCML test suite."""

from pathlib import Path

import numpy as np
import pytest

from services.importance_service import Instrumental, draw_instrumental
from services.model_core import AutologisticModel, FiniteFamilyModel, ToyBernoulliModel, simulate_dataset
from services.models import Dataset
from util import seeded_stream

MOCKS = Path(__file__).resolve().parent.parent / 'mocks'


@pytest.fixture
def mocks_dir() -> Path:
    return MOCKS


@pytest.fixture
def toy():
    return ToyBernoulliModel()


@pytest.fixture
def lattice():
    return AutologisticModel(2, 2)


@pytest.fixture
def three_state():
    # Statistics independent of x; three points on a line plus one off it
    return FiniteFamilyModel(
        states=[[0], [1], [2], [3]],
        statistics=[[0.0, 0.0], [1.0, 0.0], [2.0, 1.0], [0.0, 1.0]],
        label='three-state',
    )


@pytest.fixture
def rng():
    return seeded_stream(12345)


def toy_dataset(ones: int, total: int) -> Dataset:
    """Toy dataset with the given number of ones, no covariates."""
    responses = np.zeros((total, 1), dtype=np.int64)
    responses[:ones] = 1
    return Dataset(responses=responses, covariates=np.zeros((total, 0)))


@pytest.fixture
def toy_sample(toy, rng):
    return draw_instrumental(Instrumental.model_at([0.0]), toy, 2000, rng)


@pytest.fixture
def lattice_data(lattice, rng):
    law = np.array([[0.5], [1.0], [1.5]])
    covariates = law[rng.integers(0, 3, size=200)]
    return simulate_dataset(lattice, covariates, [0.3, 0.2], rng)
