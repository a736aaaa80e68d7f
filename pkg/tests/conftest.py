# tests/conftest.py
import numpy as np
import pytest

from csmil.data.schemas import Dataset, SynthConfig
from csmil.data.service import split_folds
from csmil.data.synthetic import generate_synthetic
from csmil.optim.schemas import TrainConfig

from .helpers import BENCHMARK, make_bag


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_synth():
    cfg = SynthConfig(K_latent=4, s_informative=1, d=8, bags_per_class=10, instances_per_bag=(6, 10), seed=3)
    return generate_synthetic(cfg)


@pytest.fixture(scope="session")
def small_folds(small_synth):
    dataset, _ = small_synth
    return split_folds(dataset, 5, seed=0)


@pytest.fixture
def quick_train():
    return TrainConfig(epochs=20, lr_smooth=1e-2, lr_beta=1e-2, gamma=0.01)


@pytest.fixture(scope="session")
def planted():
    return generate_synthetic(BENCHMARK)


@pytest.fixture(scope="session")
def planted_folds(planted):
    dataset, _ = planted
    return split_folds(dataset, 5, seed=0)


@pytest.fixture
def tiny_dataset():
    rows = np.arange(24, dtype=np.float64).reshape(6, 4)
    return Dataset(
        bags=(make_bag("a", 1, rows[:3]), make_bag("b", 0, rows[3:])),
        dim=4,
        name="tiny",
    )
