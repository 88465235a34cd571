import sys

import numpy as np
import pytest
from loguru import logger

from src.core.models import RgbGrid
from src.engine.model import ModelConfig, init
from tests.helpers import BLACK_WHITE


@pytest.fixture(autouse=True)
def reset_logger():
    yield
    logger.remove()
    logger.add(sys.__stderr__, level="WARNING")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def palette():
    return BLACK_WHITE


@pytest.fixture
def checker():
    pixels = np.zeros((4, 4, 3), dtype=np.uint8)
    pixels[::2, ::2] = 255
    pixels[1::2, 1::2] = 255
    return RgbGrid(pixels)


@pytest.fixture
def tiny_config():
    return ModelConfig(vocab_size=5, d_model=8, n_heads=2, n_layers=1, max_positions=9)


@pytest.fixture
def tiny_params(tiny_config):
    return init(tiny_config, seed=3, dtype=np.float64)


@pytest.fixture
def lively_params(tiny_config):
    """Larger init so logits actually depend on context."""
    params = init(tiny_config, seed=5, dtype=np.float64)
    noise = np.random.default_rng(5)
    for name, t in params.items():
        if not name.endswith("gain"):
            t.data += noise.normal(0.0, 0.5, size=t.shape)
    return params
