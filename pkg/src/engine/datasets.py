"""Synthetic corpora standing in for photo datasets at desk scale."""

from dataclasses import dataclass

import numpy as np

from src.core.enums import DatasetKind
from src.core.errors import ShapeError
from src.core.models import RgbGrid

STRIPE_COLORS = ((230, 60, 40), (30, 90, 200))
PATTERN_COLORS = ((240, 220, 30), (20, 20, 20), (40, 160, 80))
NEUTRAL = 128


@dataclass(frozen=True)
class Corpus:
    kind: DatasetKind
    images: list[RgbGrid]
    labels: list[int]


def _check_dims(height: int, width: int, min_size: int = 2):
    if height < min_size or width < min_size:
        raise ShapeError(f"dataset grids must be at least {min_size}x{min_size}, got {height}x{width}")


def stripes_image(height: int, width: int, phase: int) -> RgbGrid:
    colors = np.array(STRIPE_COLORS, dtype=np.uint8)
    rows = (np.arange(height) + phase) % 2
    return RgbGrid(np.broadcast_to(colors[rows][:, None, :], (height, width, 3)).copy())


def gradients_image(height: int, width: int, label: int) -> RgbGrid:
    """Horizontal ramp from a shared gray column 0 to pure red (0) or blue (1) on the right edge."""
    t = np.arange(width) / (width - 1)
    warm = np.round(NEUTRAL + (255 - NEUTRAL) * t)
    cool = np.round(NEUTRAL * (1 - t))
    if label == 0:
        row = np.stack([warm, cool, cool], axis=1)
    else:
        row = np.stack([cool, cool, warm], axis=1)
    return RgbGrid(np.broadcast_to(row[None, :, :], (height, width, 3)).astype(np.uint8))


def two_pattern_image(height: int, width: int, label: int) -> RgbGrid:
    """Bottom half shared; top half holds vertical (0) or horizontal (1) stripes."""
    fg, bg, base = (np.array(c, dtype=np.uint8) for c in PATTERN_COLORS)
    pixels = np.empty((height, width, 3), dtype=np.uint8)
    pixels[:] = base
    pixels[height // 2 :, ::2] = bg
    yy, xx = np.mgrid[0 : height // 2, 0:width]
    on = (xx % 2 == 0) if label == 0 else (yy % 2 == 0)
    pixels[: height // 2][on] = fg
    pixels[: height // 2][~on] = bg
    return RgbGrid(pixels)


def make_dataset(kind: DatasetKind, count: int, height: int, width: int, seed: int) -> Corpus:
    _check_dims(height, width)
    if count < 1:
        raise ShapeError(f"count must be positive, got {count}")
    kind = DatasetKind(kind)
    rng = np.random.default_rng(seed)
    labels = [int(v) for v in rng.integers(0, 2, size=count)]
    if kind is DatasetKind.stripes:
        images = [stripes_image(height, width, label) for label in labels]
    elif kind is DatasetKind.gradients:
        images = [gradients_image(height, width, label) for label in labels]
    else:
        images = [two_pattern_image(height, width, label) for label in labels]
    return Corpus(kind=kind, images=images, labels=labels)


def reference_patterns(kind: DatasetKind, height: int, width: int) -> list[RgbGrid]:
    """The global patterns a corpus is drawn from, one per label."""
    kind = DatasetKind(kind)
    builder = {
        DatasetKind.stripes: stripes_image,
        DatasetKind.gradients: gradients_image,
        DatasetKind.two_pattern: two_pattern_image,
    }[kind]
    return [builder(height, width, label) for label in (0, 1)]
