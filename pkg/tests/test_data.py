import numpy as np
import pytest
from PIL import Image

from drd.data import (AERIAL_CLASS_COLORS, SyntheticSpec, TileSpec,
                      generate_synthetic, load_dataset, random_flips, rgb_labels_to_indices,
                      save_dataset, stitch_predictions, tile_raster, validate_labels)


def coverage_bitmap(tiles, h, w) -> np.ndarray:
    hits = np.zeros((h, w), dtype=np.int64)
    for t in tiles:
        r0, c0 = t.origin
        th, tw = t.labels.shape
        hits[r0:min(r0 + th, h), c0:min(c0 + tw, w)] += 1
    return hits


class TestTileSpec:
    def test_stride_must_not_exceed_tile(self):
        with pytest.raises(ValueError, match="stride"):
            TileSpec(10, 10, 11, 10)

    def test_zero_stride_rejected(self):
        with pytest.raises(ValueError, match="stride"):
            TileSpec(10, 10, 0, 10)

    def test_bad_pad_mode_rejected(self):
        with pytest.raises(ValueError, match="pad_mode"):
            TileSpec.square(8, pad_mode="wrap")


class TestTileRaster:
    def test_exact_fit_single_tile(self):
        img = np.zeros((600, 600, 3), np.uint8)
        lbl = np.zeros((600, 600), np.uint8)
        tiles = tile_raster(img, lbl, TileSpec.square(600))
        assert len(tiles) == 1 and tiles[0].origin == (0, 0)

    def test_overlapping_grid_positions(self):
        # 1000 px with 600/400: starts {0, 400} per axis, so 4 tiles
        img = np.zeros((1000, 1000, 3), np.uint8)
        lbl = np.zeros((1000, 1000), np.uint8)
        tiles = tile_raster(img, lbl, TileSpec.square(600, 400))
        assert sorted(t.origin for t in tiles) == [(0, 0), (0, 400), (400, 0), (400, 400)]
        assert (coverage_bitmap(tiles, 1000, 1000) >= 1).all()

    def test_labels_stay_valid_after_tiling(self):
        rng = np.random.default_rng(0)
        lbl = rng.integers(0, 4, size=(50, 70)).astype(np.uint8)
        lbl[0, :10] = 255
        img = rng.integers(0, 255, size=(50, 70, 3)).astype(np.uint8)
        for t in tile_raster(img, lbl, TileSpec.square(32, 20)):
            validate_labels(t.labels, 4)

    def test_small_raster_padded_with_ignore(self):
        rng = np.random.default_rng(1)
        img = rng.integers(0, 255, size=(5, 8, 3)).astype(np.uint8)
        lbl = np.ones((5, 8), np.uint8)
        (tile,) = tile_raster(img, lbl, TileSpec.square(8))
        assert tile.image.shape == (8, 8, 3)
        assert (tile.labels[:5, :8] == 1).all()
        assert (tile.labels[5:, :] == 255).all()

    def test_ignore_accounting_is_exact(self):
        # padded ignore pixels = padded area, original ignores preserved
        img = np.zeros((6, 6, 3), np.uint8)
        lbl = np.zeros((6, 6), np.uint8)
        lbl[0, 0] = 255
        (tile,) = tile_raster(img, lbl, TileSpec.square(10))
        assert int((tile.labels == 255).sum()) == (10 * 10 - 6 * 6) + 1

    def test_reflect_padding_mirrors_content(self):
        img = np.arange(12, dtype=np.uint8).reshape(3, 4)[..., None].repeat(3, axis=2)
        lbl = np.zeros((3, 4), np.uint8)
        (tile,) = tile_raster(img, lbl, TileSpec.square(5, pad_mode="reflect"))
        assert tile.image[3, 0, 0] == img[1, 0, 0]  # mirror of row 1
        assert tile.image[4, 0, 0] == img[0, 0, 0]

    def test_zero_padding_zeroes_image(self):
        img = np.full((3, 3, 3), 200, np.uint8)
        lbl = np.zeros((3, 3), np.uint8)
        (tile,) = tile_raster(img, lbl, TileSpec.square(4, pad_mode="zero"))
        assert (tile.image[3, :, :] == 0).all()

    def test_one_pixel_raster(self):
        img = np.full((1, 1, 3), 9, np.uint8)
        lbl = np.zeros((1, 1), np.uint8)
        (tile,) = tile_raster(img, lbl, TileSpec.square(3))
        assert tile.image.shape == (3, 3, 3)
        assert (tile.image == 9).all()  # reflecting a single pixel repeats it

    def test_random_coverage_property(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            h, w = rng.integers(30, 300, size=2)
            tile = int(rng.integers(16, 200))
            stride = int(rng.integers(1, tile + 1))
            img = np.zeros((h, w, 3), np.uint8)
            lbl = np.zeros((h, w), np.uint8)
            tiles = tile_raster(img, lbl, TileSpec.square(tile, stride))
            assert (coverage_bitmap(tiles, h, w) >= 1).all()


class TestStitch:
    def test_single_tile_identity(self):
        rng = np.random.default_rng(2)
        sm = rng.random((4, 6, 6))
        sm /= sm.sum(axis=0)
        out = stitch_predictions([(sm, (0, 0))], 6, 6)
        assert np.array_equal(out, sm)

    def test_identical_overlapping_tiles_average_to_same(self):
        rng = np.random.default_rng(3)
        sm = rng.random((3, 4, 4))
        out = stitch_predictions([(sm, (0, 0)), (sm, (0, 0))], 4, 4)
        assert np.allclose(out, sm)

    def test_overlap_strip_is_arithmetic_mean(self):
        a = np.full((2, 4, 4), 0.25)
        b = np.full((2, 4, 4), 0.75)
        out = stitch_predictions([(a, (0, 0)), (b, (0, 2))], 4, 6)
        # per-pixel oracle over the three bands
        assert np.allclose(out[:, :, :2], 0.25)
        assert np.allclose(out[:, :, 2:4], 0.5)
        assert np.allclose(out[:, :, 4:], 0.75)

    def test_probability_tiles_stay_normalized(self):
        rng = np.random.default_rng(4)
        tiles = []
        for origin in [(0, 0), (0, 3), (2, 0), (2, 3)]:
            sm = rng.random((3, 5, 5))
            sm /= sm.sum(axis=0)
            tiles.append((sm, origin))
        out = stitch_predictions(tiles, 7, 8)
        assert np.abs(out.sum(axis=0) - 1).max() < 1e-5

    def test_uncovered_pixel_reported_with_coordinates(self):
        sm = np.ones((2, 2, 2)) * 0.5
        with pytest.raises(ValueError, match=r"\(0, 2\)"):
            stitch_predictions([(sm, (0, 0))], 4, 4)

    def test_roundtrip_of_constant_map_over_tiles(self):
        const = np.zeros((3, 9, 11))
        const[1] = 1.0
        img = np.zeros((9, 11, 3), np.uint8)
        lbl = np.zeros((9, 11), np.uint8)
        tiles = tile_raster(img, lbl, TileSpec.square(4, 3))
        scored = [(const[:, r:r + 4, c:c + 4] if r + 4 <= 9 and c + 4 <= 11
                   else np.pad(const, ((0, 0), (0, max(0, r + 4 - 9)), (0, max(0, c + 4 - 11))),
                               mode="edge")[:, r:r + 4, c:c + 4], (r, c))
                  for _, _, (r, c) in tiles]
        out = stitch_predictions(scored, 9, 11)
        assert np.array_equal(out, const)


class TestSynthetic:
    def test_same_seed_is_byte_identical(self):
        spec = SyntheticSpec(5, (32, 32), 4, seed=11)
        d1, d2 = generate_synthetic(spec), generate_synthetic(spec)
        assert all(np.array_equal(a, b) for a, b in zip(d1.images, d2.images))
        assert all(np.array_equal(a, b) for a, b in zip(d1.labels, d2.labels))

    def test_every_image_contains_every_class(self):
        ds = generate_synthetic(SyntheticSpec(10, (32, 32), 2, seed=0))
        for lbl in ds.labels:
            assert set(np.unique(lbl)) == {0, 1}

    def test_majority_class_predictor_scores_below_half_miou(self):
        from drd.metrics import ConfusionMatrix, accumulate, mean_iou
        ds = generate_synthetic(SyntheticSpec(20, (64, 64), 5, seed=0))
        majority = int(np.argmax(ds.class_pixel_counts()))
        cm = ConfusionMatrix(5)
        for lbl in ds.labels:
            accumulate(cm, np.full_like(lbl, majority), lbl)
        _, miou = mean_iou(cm)
        assert miou < 0.5

    def test_blobs_family(self):
        ds = generate_synthetic(SyntheticSpec(3, (32, 32), 3, shape_family="blobs", seed=2))
        for lbl in ds.labels:
            assert set(np.unique(lbl)) == {0, 1, 2}

    def test_train_label_noise_spares_val_split(self):
        clean = generate_synthetic(SyntheticSpec(10, (32, 32), 4, seed=3))
        noisy = generate_synthetic(SyntheticSpec(10, (32, 32), 4, seed=3, train_label_noise=0.4))
        for i in noisy.train_indices:
            assert not np.array_equal(noisy.labels[i], clean.labels[i])
            assert np.array_equal(noisy.images[i], clean.images[i])
        for i in noisy.val_indices:
            assert np.array_equal(noisy.labels[i], clean.labels[i])

    def test_split_is_80_20(self):
        ds = generate_synthetic(SyntheticSpec(10, (16, 16), 2, seed=0))
        assert len(ds.train_indices) == 8 and len(ds.val_indices) == 2

    def test_too_many_classes_rejected(self):
        with pytest.raises(ValueError, match="classes"):
            SyntheticSpec(1, (32, 32), 99)


class TestLoadSave:
    def test_empty_root_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="no samples"):
            load_dataset(tmp_path)

    def test_single_pair_roundtrip(self, tmp_path):
        ds = generate_synthetic(SyntheticSpec(1, (16, 16), 3, seed=5))
        save_dataset(ds, tmp_path)
        loaded = load_dataset(tmp_path, num_classes=3)
        assert len(loaded) == 1
        assert np.array_equal(loaded.images[0], ds.images[0])
        assert np.array_equal(loaded.labels[0], ds.labels[0])

    def test_out_of_range_label_rejected_naming_file(self, tmp_path):
        (tmp_path / "images").mkdir()
        (tmp_path / "labels").mkdir()
        Image.fromarray(np.zeros((8, 8, 3), np.uint8)).save(tmp_path / "images" / "a.png")
        bad = np.zeros((8, 8), np.uint8)
        bad[0, 0] = 250
        Image.fromarray(bad).save(tmp_path / "labels" / "a.png")
        with pytest.raises(ValueError, match="a.png"):
            load_dataset(tmp_path, num_classes=6)

    def test_missing_label_rejected(self, tmp_path):
        (tmp_path / "images").mkdir()
        (tmp_path / "labels").mkdir()
        Image.fromarray(np.zeros((8, 8, 3), np.uint8)).save(tmp_path / "images" / "b.png")
        with pytest.raises(ValueError, match="missing label"):
            load_dataset(tmp_path)


def test_rgb_label_conversion_roundtrip():
    rng = np.random.default_rng(5)
    colors = list(AERIAL_CLASS_COLORS)
    pick = rng.integers(0, len(colors), size=(10, 10))
    rgb = np.array(colors, dtype=np.uint8)[pick]
    idx = rgb_labels_to_indices(rgb)
    want = np.array([AERIAL_CLASS_COLORS[c] for c in colors])[pick]
    assert np.array_equal(idx, want)


def test_rgb_label_unknown_color_rejected():
    rgb = np.zeros((2, 2, 3), np.uint8)
    rgb[..., 0] = 7
    with pytest.raises(ValueError, match="unknown label color"):
        rgb_labels_to_indices(rgb)


def test_random_flips_deterministic_given_rng():
    img = np.arange(12, dtype=np.uint8).reshape(2, 2, 3)
    lbl = np.arange(4, dtype=np.uint8).reshape(2, 2)
    a = random_flips(img, lbl, np.random.default_rng(0))
    b = random_flips(img, lbl, np.random.default_rng(0))
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
