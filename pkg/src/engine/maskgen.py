import math

import numpy as np
from loguru import logger

from src.core.enums import MaskPolicy
from src.core.errors import ShapeError
from src.core.models import MaskGrid

MAX_ATTEMPTS = 10_000


def _check_bucket(height: int, width: int, ratio_lo: float, ratio_hi: float) -> tuple[int, int]:
    if height < 1 or width < 1:
        raise ShapeError(f"mask dimensions must be positive, got {height}x{width}")
    if not (0.0 <= ratio_lo < ratio_hi <= 1.0):
        raise ShapeError(f"invalid ratio bucket [{ratio_lo}, {ratio_hi}]")
    area = height * width
    lo_count = max(1, math.ceil(ratio_lo * area - 1e-9))
    hi_count = min(area - 1, math.floor(ratio_hi * area + 1e-9))
    if lo_count > hi_count:
        raise ShapeError(
            f"no {height}x{width} mask has a missing ratio in [{ratio_lo}, {ratio_hi}]"
        )
    return lo_count, hi_count


def _stamp(missing: np.ndarray, y: float, x: float, radius: float):
    h, w = missing.shape
    r = int(math.ceil(radius))
    y0, y1 = max(0, int(y) - r), min(h, int(y) + r + 1)
    x0, x1 = max(0, int(x) - r), min(w, int(x) + r + 1)
    yy, xx = np.mgrid[y0:y1, x0:x1]
    disc = (yy + 0.5 - y) ** 2 + (xx + 0.5 - x) ** 2 <= radius**2
    if not disc.any():
        disc[min(int(y), h - 1) - y0, min(int(x), w - 1) - x0] = True
    missing[y0:y1, x0:x1] |= disc


def _draw(
    rng: np.random.Generator, height: int, width: int, target: int, max_thickness: int
) -> np.ndarray:
    missing = np.zeros((height, width), dtype=bool)
    area = height * width
    while True:
        thickness = int(rng.integers(1, max_thickness + 1))
        y, x = rng.uniform(0, height), rng.uniform(0, width)
        angle = rng.uniform(0, 2 * math.pi)
        walk = int(rng.integers(max(2, area // 16), max(3, area // 4) + 1))
        for _ in range(walk):
            _stamp(missing, y, x, thickness / 2)
            count = int(missing.sum())
            if count >= target:
                return missing
            angle += rng.normal(0.0, 0.6)
            y = min(max(y + math.sin(angle), 0.0), height - 1e-6)
            x = min(max(x + math.cos(angle), 0.0), width - 1e-6)


def random_irregular_mask(
    height: int, width: int, ratio_lo: float, ratio_hi: float, seed: int
) -> MaskGrid:
    """Union of random brush strokes whose missing ratio lies in [ratio_lo, ratio_hi]."""
    lo_count, hi_count = _check_bucket(height, width, ratio_lo, ratio_hi)
    rng = np.random.default_rng(seed)
    base_thickness = max(1, min(height, width) // 4)

    for attempt in range(MAX_ATTEMPTS):
        max_thickness = max(1, base_thickness // (1 + attempt // 8))
        target = int(rng.integers(lo_count, hi_count + 1))
        missing = _draw(rng, height, width, target, max_thickness)
        count = int(missing.sum())
        if lo_count <= count <= hi_count:
            if attempt:
                logger.debug(f"mask accepted after {attempt + 1} draws")
            return MaskGrid(missing)
    raise ShapeError(f"could not draw a mask in [{ratio_lo}, {ratio_hi}] after {MAX_ATTEMPTS} draws")


def top_block_mask(
    height: int, width: int, ratio_lo: float, ratio_hi: float, seed: int
) -> MaskGrid:
    """Masks a raster-order prefix, so every valid pixel comes after the hole."""
    lo_count, hi_count = _check_bucket(height, width, ratio_lo, ratio_hi)
    rng = np.random.default_rng(seed)
    count = int(rng.integers(lo_count, hi_count + 1))
    missing = np.zeros(height * width, dtype=bool)
    missing[:count] = True
    return MaskGrid(missing.reshape(height, width))


def mask_ratio(mask: MaskGrid) -> float:
    return mask.count / (mask.height * mask.width)


def mask_maker(policy: MaskPolicy):
    if MaskPolicy(policy) is MaskPolicy.top_block:
        return top_block_mask
    return random_irregular_mask
