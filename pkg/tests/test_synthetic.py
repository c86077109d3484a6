"""Tests for the synthetic crossing-tile generator."""

import itertools

import numpy as np
import pytest

from crosspoint.synthetic import SyntheticConfig, generate_dataset


class TestConfigValidation:
    def test_rejects_nonpositive_tile_count(self):
        with pytest.raises(ValueError):
            SyntheticConfig(n_tiles=0)

    def test_rejects_bad_negative_fraction(self):
        with pytest.raises(ValueError):
            SyntheticConfig(negative_fraction=1.5)

    def test_rejects_tile_smaller_than_gt_box(self):
        with pytest.raises(ValueError):
            SyntheticConfig(tile_size=12, gt_box_size=16.0)


class TestDeterminism:
    def test_same_seed_same_dataset(self):
        cfg = SyntheticConfig(n_tiles=12, tile_size=40)
        a = generate_dataset(cfg, 21)
        b = generate_dataset(cfg, 21)
        assert len(a) == len(b) == 12
        for x, y in zip(a, b):
            assert x.tile.id == y.tile.id
            assert np.array_equal(x.tile.pixels, y.tile.pixels)
            assert x.ground_truths == y.ground_truths

    def test_different_seed_differs(self):
        cfg = SyntheticConfig(n_tiles=8, tile_size=40)
        a = generate_dataset(cfg, 1)
        b = generate_dataset(cfg, 2)
        assert any(
            not np.array_equal(x.tile.pixels, y.tile.pixels) for x, y in zip(a, b)
        )


@pytest.fixture(scope="module")
def dataset():
    return generate_dataset(SyntheticConfig(n_tiles=40, tile_size=48), 5)


class TestDatasetShape:
    def test_count_ids_and_pixel_format(self, dataset):
        assert len(dataset) == 40
        ids = [at.tile.id for at in dataset]
        assert len(set(ids)) == 40
        assert ids[0] == "syn_0000" and ids[-1] == "syn_0039"
        for at in dataset:
            px = at.tile.pixels
            assert px.shape == (48, 48, 3)
            assert px.dtype == np.uint8

    def test_background_is_mostly_white(self, dataset):
        for at in dataset:
            assert (at.tile.pixels == 255).mean() > 0.5

    def test_negative_fraction_is_exact(self, dataset):
        negatives = sum(1 for at in dataset if not at.ground_truths)
        assert negatives == round(0.15 * 40)

    def test_boxes_have_configured_size_and_stay_inside(self, dataset):
        for at in dataset:
            for b in at.ground_truths:
                assert b.w == 16.0 and b.h == 16.0
                assert b.cx - b.w / 2 >= 0 and b.cy - b.h / 2 >= 0
                assert b.cx + b.w / 2 <= 48 and b.cy + b.h / 2 <= 48

    def test_crossings_are_separated(self, dataset):
        for at in dataset:
            for a, b in itertools.combinations(at.ground_truths, 2):
                d = ((a.cx - b.cx) ** 2 + (a.cy - b.cy) ** 2) ** 0.5
                assert d >= 16.0

    def test_crossings_sit_on_dark_strokes(self, dataset):
        for at in dataset:
            gray = np.asarray(at.tile.pixels)[:, :, 0]
            for b in at.ground_truths:
                r, c = int(round(b.cy)), int(round(b.cx))
                patch = gray[max(r - 2, 0) : r + 3, max(c - 2, 0) : c + 3]
                assert patch.min() < 100

    def test_negative_tiles_still_have_ink(self, dataset):
        for at in dataset:
            if not at.ground_truths:
                assert (np.asarray(at.tile.pixels)[:, :, 0] < 100).any()
