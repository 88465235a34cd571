from typing import Iterable

import numpy as np
from loguru import logger

from src.core.errors import InsufficientColorsError, ShapeError
from src.core.models import Palette, RgbGrid, TokenGrid

_CHUNK = 1024


def _as_points(pixels: "np.ndarray | Iterable[RgbGrid] | RgbGrid") -> np.ndarray:
    if isinstance(pixels, RgbGrid):
        return pixels.flat().astype(np.float64)
    if isinstance(pixels, np.ndarray):
        return pixels.reshape(-1, 3).astype(np.float64)
    items = list(pixels)
    if items and isinstance(items[0], RgbGrid):
        return np.concatenate([g.flat() for g in items]).astype(np.float64)
    return np.asarray(items, dtype=np.float64).reshape(-1, 3)


def nearest_centroid(points: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Index and squared distance of the nearest centroid; ties go to the lowest index."""
    idx = np.empty(len(points), dtype=np.int64)
    dist = np.empty(len(points), dtype=np.float64)
    for start in range(0, len(points), _CHUNK):
        chunk = points[start : start + _CHUNK]
        d2 = ((chunk[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        best = np.argmin(d2, axis=1)
        idx[start : start + _CHUNK] = best
        dist[start : start + _CHUNK] = d2[np.arange(len(chunk)), best]
    return idx, dist


def _kmeans_pp(colors: np.ndarray, weights: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    first = rng.choice(len(colors), p=weights / weights.sum())
    centroids = [colors[first]]
    d2 = ((colors - colors[first]) ** 2).sum(axis=1)
    for _ in range(1, k):
        mass = weights * d2
        pick = rng.choice(len(colors), p=mass / mass.sum())
        centroids.append(colors[pick])
        d2 = np.minimum(d2, ((colors - colors[pick]) ** 2).sum(axis=1))
    return np.array(centroids, dtype=np.float64)


def _duplicate_rows(centroids: np.ndarray) -> list[int]:
    seen: dict[bytes, int] = {}
    dupes = []
    for i, row in enumerate(centroids):
        key = row.tobytes()
        if key in seen:
            dupes.append(i)
        else:
            seen[key] = i
    return dupes


def fit_palette(pixels, k: int, seed: int = 0, max_iters: int = 100) -> Palette:
    points = _as_points(pixels)
    if len(points) == 0:
        raise ShapeError("no pixels to fit a palette on")
    if k < 1:
        raise ShapeError(f"k must be >= 1, got {k}")

    colors, counts = np.unique(points, axis=0, return_counts=True)
    if k > len(colors):
        raise InsufficientColorsError(k, len(colors))
    weights = counts.astype(np.float64)

    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp(colors, weights, k, rng)
    assign = None

    for iteration in range(max_iters):
        new_assign, d2 = nearest_centroid(colors, centroids)
        if assign is not None and np.array_equal(new_assign, assign):
            logger.debug(f"k-means converged after {iteration} iterations")
            break
        assign = new_assign

        sums = np.zeros_like(centroids)
        np.add.at(sums, assign, colors * weights[:, None])
        mass = np.bincount(assign, weights=weights, minlength=k)
        filled = mass > 0
        centroids[filled] = sums[filled] / mass[filled, None]

        reseed = list(np.flatnonzero(~filled)) + _duplicate_rows(centroids)
        if reseed:
            logger.debug(f"reseeding {len(reseed)} centroid(s) at iteration {iteration}")
            spread = d2.copy()
            for c in reseed:
                far = int(np.argmax(spread))
                centroids[c] = colors[far]
                spread[far] = -1.0
            assign = None
    else:
        logger.debug(f"k-means stopped at max_iters={max_iters}")

    return Palette(np.clip(centroids, 0.0, 255.0))


def encode(image: RgbGrid, palette: Palette) -> TokenGrid:
    idx, _ = nearest_centroid(image.flat().astype(np.float64), palette.centroids)
    return TokenGrid(idx.reshape(image.height, image.width), palette.k)


def decode(tokens: TokenGrid, palette: Palette) -> RgbGrid:
    flat = tokens.flat()
    if flat.max() >= palette.k:
        raise ShapeError(f"token id {int(flat.max())} out of range for palette of {palette.k}")
    colors = np.clip(np.rint(palette.centroids), 0, 255).astype(np.uint8)
    return RgbGrid(colors[flat].reshape(tokens.height, tokens.width, 3))
