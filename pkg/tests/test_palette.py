import numpy as np
import pytest

from src.core.errors import InsufficientColorsError, ShapeError
from src.core.models import Palette, RgbGrid, TokenGrid
from src.engine.palette import decode, encode, fit_palette, nearest_centroid


def test_two_separated_clusters():
    pixels = np.array([[0, 0, 0]] * 8 + [[255, 255, 255]] * 8, dtype=np.uint8)
    palette = fit_palette(pixels, 2, seed=0)

    got = sorted(map(tuple, palette.centroids.tolist()))
    assert got == [(0.0, 0.0, 0.0), (255.0, 255.0, 255.0)]


def test_single_cluster_is_the_mean():
    pixels = np.array([[10, 20, 30], [30, 40, 50], [50, 60, 70], [50, 60, 70]], dtype=np.uint8)
    palette = fit_palette(pixels, 1)

    assert palette.k == 1
    np.testing.assert_allclose(palette.centroids[0], pixels.astype(np.float64).mean(axis=0))


def test_four_blobs_recovered(rng):
    means = np.array([[20, 20, 20], [220, 30, 30], [30, 220, 30], [30, 30, 220]], dtype=np.float64)
    labels = rng.integers(0, 4, size=1000)
    pixels = np.clip(np.rint(means[labels] + rng.normal(0, 4, size=(1000, 3))), 0, 255).astype(np.uint8)

    palette = fit_palette(pixels, 4, seed=1)

    for mean in means:
        assert np.linalg.norm(palette.centroids - mean, axis=1).min() < 10

    # Lloyd fixed point: each centroid is the mean of the pixels assigned to it
    idx, _ = nearest_centroid(pixels.astype(np.float64), palette.centroids)
    for c in range(4):
        np.testing.assert_allclose(palette.centroids[c], pixels[idx == c].mean(axis=0), atol=1e-6)


def test_centroids_are_distinct(rng):
    pixels = rng.integers(0, 256, size=(300, 3)).astype(np.uint8)
    palette = fit_palette(pixels, 16, seed=2)

    assert len(np.unique(palette.centroids, axis=0)) == 16
    assert palette.centroids.min() >= 0 and palette.centroids.max() <= 255


def test_same_seed_same_palette(rng):
    pixels = rng.integers(0, 256, size=(200, 3)).astype(np.uint8)
    assert fit_palette(pixels, 8, seed=4) == fit_palette(pixels, 8, seed=4)


def test_too_few_colors():
    pixels = np.array([[1, 2, 3]] * 5 + [[9, 9, 9]] * 5, dtype=np.uint8)
    with pytest.raises(InsufficientColorsError, match="insufficient colors"):
        fit_palette(pixels, 3)


def test_empty_and_bad_k():
    with pytest.raises(ShapeError):
        fit_palette(np.zeros((0, 3), dtype=np.uint8), 1)
    with pytest.raises(ShapeError):
        fit_palette(np.zeros((4, 3), dtype=np.uint8), 0)


def test_encode_black_image(palette):
    image = RgbGrid(np.zeros((3, 3, 3), dtype=np.uint8))
    assert (encode(image, palette).tokens == 0).all()


def test_encode_tie_goes_to_lower_index():
    palette = Palette(np.array([[0, 0, 0], [2, 2, 2]], dtype=np.float64))
    image = RgbGrid(np.full((1, 1, 3), 1, dtype=np.uint8))
    assert encode(image, palette).tokens[0, 0] == 0


def test_encode_matches_brute_force(rng):
    palette = Palette(rng.uniform(0, 255, size=(16, 3)))
    image = RgbGrid(rng.integers(0, 256, size=(8, 8, 3)).astype(np.uint8))

    tokens = encode(image, palette)

    for (y, x), token in np.ndenumerate(tokens.tokens):
        pixel = image.pixels[y, x].astype(np.float64)
        distances = [((pixel - c) ** 2).sum() for c in palette.centroids]
        assert token == int(np.argmin(distances))


def test_decode_constant_grid(palette):
    image = decode(TokenGrid(np.ones((2, 3), dtype=np.int64)), palette)
    assert (image.pixels == 255).all()


def test_encode_inverts_decode(rng):
    palette = fit_palette(rng.integers(0, 256, size=(100, 3)).astype(np.uint8), 6, seed=0)
    tokens = TokenGrid(rng.integers(0, 6, size=(5, 5)), 6)
    assert encode(decode(tokens, palette), palette) == tokens


def test_decode_rejects_out_of_range(palette):
    with pytest.raises(ShapeError):
        decode(TokenGrid(np.full((1, 1), 2)), palette)
