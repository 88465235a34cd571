import numpy as np

from src.core.models import MaskGrid, Palette, TokenGrid

BLACK_WHITE = Palette(np.array([[0, 0, 0], [255, 255, 255]], dtype=np.float64))


def make_tokens(rows, k=None):
    return TokenGrid(np.array(rows, dtype=np.int64), k)


def make_mask(height, width, positions):
    return MaskGrid.from_positions(height, width, positions)


def random_grid(rng, height, width, k):
    return TokenGrid(rng.integers(0, k, size=(height, width)), k)
