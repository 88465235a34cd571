from dataclasses import dataclass, field

import numpy as np

from src.core.errors import ShapeError


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.ascontiguousarray(array)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class RgbGrid:
    """Low-resolution RGB image, ``pixels`` is (height, width, 3) uint8."""

    pixels: np.ndarray

    def __post_init__(self):
        pixels = np.asarray(self.pixels)
        if pixels.ndim != 3 or pixels.shape[2] != 3 or 0 in pixels.shape[:2]:
            raise ShapeError(f"RGB grid must be (h, w, 3), got {pixels.shape}")
        if pixels.dtype != np.uint8:
            if np.any(pixels < 0) or np.any(pixels > 255):
                raise ShapeError("RGB channels must lie in [0, 255]")
            pixels = pixels.astype(np.uint8)
        object.__setattr__(self, "pixels", _frozen(pixels))

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    def flat(self) -> np.ndarray:
        return self.pixels.reshape(-1, 3)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, RgbGrid) and np.array_equal(self.pixels, other.pixels)


@dataclass(frozen=True, eq=False)
class TokenGrid:
    """Palette-token ids laid out row-major, ``tokens`` is (height, width) int64."""

    tokens: np.ndarray
    k: int | None = None

    def __post_init__(self):
        tokens = np.asarray(self.tokens)
        if tokens.ndim != 2 or 0 in tokens.shape:
            raise ShapeError(f"token grid must be a non-empty 2-D array, got {tokens.shape}")
        if tokens.size and tokens.min() < 0:
            raise ShapeError("token ids must be non-negative")
        if self.k is not None and tokens.size and tokens.max() >= self.k:
            raise ShapeError(f"token id {int(tokens.max())} out of range for k={self.k}")
        object.__setattr__(self, "tokens", _frozen(tokens.astype(np.int64)))

    @property
    def height(self) -> int:
        return int(self.tokens.shape[0])

    @property
    def width(self) -> int:
        return int(self.tokens.shape[1])

    @property
    def area(self) -> int:
        return self.height * self.width

    def flat(self) -> np.ndarray:
        return self.tokens.reshape(-1)

    def with_values(self, positions: np.ndarray, values: np.ndarray) -> "TokenGrid":
        flat = self.flat().copy()
        flat[np.asarray(positions, dtype=np.int64)] = values
        return TokenGrid(flat.reshape(self.height, self.width), self.k)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, TokenGrid) and np.array_equal(self.tokens, other.tokens)


@dataclass(frozen=True, eq=False)
class MaskGrid:
    """``missing`` is (height, width) bool; True marks a hole pixel."""

    missing: np.ndarray
    allow_all_missing: bool = field(default=False, repr=False)

    def __post_init__(self):
        missing = np.asarray(self.missing, dtype=bool)
        if missing.ndim != 2 or 0 in missing.shape:
            raise ShapeError(f"mask must be a non-empty 2-D array, got {missing.shape}")
        if missing.all() and not self.allow_all_missing:
            raise ShapeError("mask has no valid pixel; use MaskGrid.all_missing() explicitly")
        object.__setattr__(self, "missing", _frozen(missing))

    @classmethod
    def all_missing(cls, height: int, width: int) -> "MaskGrid":
        return cls(np.ones((height, width), dtype=bool), allow_all_missing=True)

    @classmethod
    def from_positions(cls, height: int, width: int, positions) -> "MaskGrid":
        missing = np.zeros(height * width, dtype=bool)
        missing[np.asarray(list(positions), dtype=np.int64)] = True
        return cls(missing.reshape(height, width), allow_all_missing=True)

    @property
    def height(self) -> int:
        return int(self.missing.shape[0])

    @property
    def width(self) -> int:
        return int(self.missing.shape[1])

    @property
    def count(self) -> int:
        return int(self.missing.sum())

    def positions(self) -> np.ndarray:
        return np.flatnonzero(self.missing.reshape(-1))

    def valid_positions(self) -> np.ndarray:
        return np.flatnonzero(~self.missing.reshape(-1))

    def check_pair(self, grid: "TokenGrid | RgbGrid"):
        if (grid.height, grid.width) != (self.height, self.width):
            raise ShapeError(
                f"mask is {self.height}x{self.width} but grid is {grid.height}x{grid.width}"
            )

    def __eq__(self, other: object) -> bool:
        return isinstance(other, MaskGrid) and np.array_equal(self.missing, other.missing)


@dataclass(frozen=True, eq=False)
class Palette:
    """K RGB centroids; the row index of a centroid is its token id."""

    centroids: np.ndarray

    def __post_init__(self):
        centroids = np.asarray(self.centroids, dtype=np.float64)
        if centroids.ndim != 2 or centroids.shape[1] != 3 or centroids.shape[0] < 1:
            raise ShapeError(f"palette must be (k, 3) with k >= 1, got {centroids.shape}")
        if np.any(centroids < 0) or np.any(centroids > 255):
            raise ShapeError("palette channels must lie in [0, 255]")
        object.__setattr__(self, "centroids", _frozen(centroids))

    @property
    def k(self) -> int:
        return int(self.centroids.shape[0])

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Palette) and np.array_equal(self.centroids, other.centroids)
