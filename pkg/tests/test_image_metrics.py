"""Edge density, RGB diversity, and variance-of-Laplacian sharpness."""

import numpy as np
import pytest

from crosspoint.dataset import AnnotatedTile, Tile, flip_h, flip_v, gaussian_blur
from crosspoint.image_metrics import (
    GRAY_WEIGHTS,
    edge_density,
    grayscale,
    rgb_diversity,
    sharpness,
    tile_metrics,
)


def constant_tile(value=128, size=16):
    return np.full((size, size, 3), value, dtype=np.uint8)


def textured_tile(seed=5, size=32):
    """Deterministic non-constant fixture with structure at several scales."""
    rng = np.random.default_rng(seed)
    img = np.full((size, size, 3), 255, dtype=np.uint8)
    img[:, size // 3] = (40, 40, 40)
    img[size // 2, :] = (80, 60, 40)
    noise = rng.integers(0, 60, size=(size, size, 3))
    return np.clip(img.astype(int) - noise, 0, 255).astype(np.uint8)


class TestGrayscale:
    def test_weights(self):
        img = np.zeros((4, 4, 3), dtype=np.uint8)
        img[:, :, 0] = 100
        np.testing.assert_allclose(grayscale(img), 100 * GRAY_WEIGHTS[0])
        img2 = np.full((4, 4, 3), 255, dtype=np.uint8)
        np.testing.assert_allclose(grayscale(img2), 255.0, atol=1e-9)

    def test_rejects_tiny_or_malformed(self):
        with pytest.raises(ValueError):
            edge_density(np.zeros((2, 5, 3), dtype=np.uint8))
        with pytest.raises(ValueError):
            edge_density(np.zeros((5, 5), dtype=np.uint8))


class TestEdgeDensity:
    def test_constant_tile_is_zero(self):
        assert edge_density(constant_tile()) == 0.0

    def test_vertical_step_edge_magnitude(self):
        """Columns adjacent to a 0 -> 255 step respond at 4 * 255 in Sobel-x."""
        size = 12
        img = np.zeros((size, size, 3), dtype=np.uint8)
        img[:, size // 2 :] = 255
        gray = grayscale(img)
        from crosspoint.image_metrics import SOBEL_X, SOBEL_Y, _correlate3

        gx = _correlate3(gray, SOBEL_X)
        gy = _correlate3(gray, SOBEL_Y)
        step = size // 2
        np.testing.assert_allclose(np.abs(gx[:, step - 1]), 4 * 255.0)
        np.testing.assert_allclose(np.abs(gx[:, step]), 4 * 255.0)
        np.testing.assert_allclose(gy, 0.0, atol=1e-9)
        # the mean counts exactly the two responding columns
        assert edge_density(img) == pytest.approx(4 * 255.0 * 2 / size)

    def test_adding_an_edge_increases_density(self):
        img = constant_tile(200, size=20)
        base = edge_density(img)
        img2 = img.copy()
        img2[:, 10:] = 30
        assert edge_density(img2) > base

    def test_flip_invariance(self):
        t = AnnotatedTile(tile=Tile(id="f", pixels=textured_tile()), ground_truths=[])
        d = edge_density(t.tile)
        assert edge_density(flip_h(t).tile) == pytest.approx(d, rel=1e-12)
        assert edge_density(flip_v(t).tile) == pytest.approx(d, rel=1e-12)


class TestRgbDiversity:
    def test_constant_tile(self):
        assert rgb_diversity(constant_tile()) == 1

    def test_four_distinct_colors(self):
        img = np.zeros((2, 2, 3), dtype=np.uint8)
        img[0, 0] = (255, 0, 0)
        img[0, 1] = (0, 255, 0)
        img[1, 0] = (0, 0, 255)
        img[1, 1] = (9, 9, 9)
        # rgb_diversity has no minimum-size precondition
        assert rgb_diversity(img) == 4

    def test_duplicates_counted_once(self):
        img = np.zeros((1, 3, 3), dtype=np.uint8)
        img[0, 0] = (255, 0, 0)
        img[0, 1] = (255, 0, 0)
        img[0, 2] = (0, 0, 255)
        assert rgb_diversity(img) == 2

    def test_channel_order_matters(self):
        img = np.zeros((1, 2, 3), dtype=np.uint8)
        img[0, 0] = (1, 2, 3)
        img[0, 1] = (3, 2, 1)
        assert rgb_diversity(img) == 2

    def test_bounds_and_flip_invariance(self):
        img = textured_tile(seed=9)
        n = rgb_diversity(img)
        assert 1 <= n <= img.shape[0] * img.shape[1]
        t = AnnotatedTile(tile=Tile(id="g", pixels=img), ground_truths=[])
        assert rgb_diversity(flip_h(t).tile) == n
        assert rgb_diversity(flip_v(t).tile) == n


class TestSharpness:
    def test_constant_tile_is_zero(self):
        assert sharpness(constant_tile()) == 0.0

    def test_impulse_hand_oracle(self):
        """Single bright pixel: responses are one -4v and four +v, mean 0."""
        size = 11
        img = np.zeros((size, size, 3), dtype=np.uint8)
        img[5, 5] = (255, 255, 255)
        v = 255.0  # grayscale of white
        n = size * size
        expected = (16 * v * v + 4 * v * v) / n
        assert sharpness(img) == pytest.approx(expected, rel=1e-12)

    def test_blur_strictly_reduces_sharpness(self):
        t = AnnotatedTile(tile=Tile(id="s", pixels=textured_tile()), ground_truths=[])
        s_small = sharpness(gaussian_blur(t, 0.5).tile)
        s_big = sharpness(gaussian_blur(t, 2.0).tile)
        assert sharpness(t.tile) > s_small > s_big

    def test_flip_invariance(self):
        t = AnnotatedTile(tile=Tile(id="s2", pixels=textured_tile(seed=13)), ground_truths=[])
        s = sharpness(t.tile)
        assert sharpness(flip_h(t).tile) == pytest.approx(s, rel=1e-12)
        assert sharpness(flip_v(t).tile) == pytest.approx(s, rel=1e-12)


class TestTileMetrics:
    def test_bundle_matches_parts(self):
        img = textured_tile(seed=21)
        m = tile_metrics(img)
        assert m.edge_density == edge_density(img)
        assert m.rgb_diversity == rgb_diversity(img)
        assert m.sharpness == sharpness(img)
        assert np.isfinite([m.edge_density, m.sharpness]).all()
