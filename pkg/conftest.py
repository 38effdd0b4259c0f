import os
import sys

# niente file di log né database durante i test
os.environ['LOG_FILE'] = ''
os.environ['RESULTS_DB'] = ''
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from data.synthetic import make_synthetic_splits  # noqa: E402
from netcore.model import init_xavier_uniform, mlp  # noqa: E402
from stable.density import QuadratureConfig  # noqa: E402


@pytest.fixture
def quad():
    return QuadratureConfig()


@pytest.fixture
def tiny_splits():
    """60 train / 30 test, 3 classi, immagini 1x4x4"""
    return make_synthetic_splits(60, 30, 3, (1, 4, 4), difficulty=0.3, seed=7)


@pytest.fixture
def tiny_mlp(tiny_splits):
    train_set, _ = tiny_splits
    return init_xavier_uniform(mlp(train_set.input_shape, train_set.num_classes, (8,)), seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
