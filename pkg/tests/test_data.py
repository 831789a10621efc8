import numpy as np
import pytest
from PIL import Image

from latentscout import data
from latentscout.errors import ConfigurationError, IdxParseError, IngestionError


def colored_cfg(**kw):
    base = dict(n_samples=100, image_size=32, n_classes=5, p_corr=0.995,
                seed=0, palette=data.DEFAULT_PALETTE)
    base.update(kw)
    return data.SyntheticConfig(**base)


def zoom_cfg(**kw):
    base = dict(n_samples=100, image_size=32, n_classes=2, p_corr=1.0,
                seed=0, zoom_levels=[0.9, 0.3])
    base.update(kw)
    return data.SyntheticConfig(**base)


class TestColoredShortcut:
    def test_p_corr_one_mask_all_true(self):
        ds = data.generate_colored_shortcut(colored_cfg(p_corr=1.0))
        assert ds.shortcut_mask.mean() == 1.0

    def test_p_corr_high_binomial_bound(self):
        ds = data.generate_colored_shortcut(colored_cfg(
            p_corr=0.995, n_samples=10000))
        # expected count 9950, binomial 4-sigma bound
        sigma = np.sqrt(10000 * 0.995 * 0.005)
        assert abs(ds.shortcut_mask.sum() - 9950) <= 4 * sigma

    def test_p_corr_zero_matches_chance(self):
        # oracle: simulate the assignment rule directly
        rng = np.random.default_rng(123)
        sim = (rng.integers(0, 5, 200000) == rng.integers(0, 5, 200000)).mean()
        assert abs(sim - 0.2) < 0.01  # sanity on the oracle itself

        ds = data.generate_colored_shortcut(colored_cfg(
            p_corr=0.0, n_samples=10000))
        sigma = np.sqrt(10000 * 0.2 * 0.8) / 10000
        assert abs(ds.shortcut_mask.mean() - 0.2) <= 4 * sigma

    def test_deterministic(self):
        a = data.generate_colored_shortcut(colored_cfg(seed=42))
        b = data.generate_colored_shortcut(colored_cfg(seed=42))
        assert np.array_equal(a.images, b.images)
        assert np.array_equal(a.labels, b.labels)
        assert np.array_equal(a.shortcut_mask, b.shortcut_mask)

    def test_pixels_in_unit_interval(self):
        ds = data.generate_colored_shortcut(colored_cfg())
        assert ds.images.min() >= 0.0 and ds.images.max() <= 1.0

    def test_bad_palette_length(self):
        with pytest.raises(ConfigurationError):
            data.generate_colored_shortcut(colored_cfg(
                palette=data.DEFAULT_PALETTE[:3]))


class TestZoomShortcut:
    def test_bbox_area_matches_scale(self):
        ds = data.generate_zoom_shortcut(zoom_cfg(n_samples=50))
        means = {}
        for cls, expected in [(1, 0.81), (2, 0.09)]:
            imgs = ds.images[ds.labels == cls]
            areas = []
            for img in imgs:
                fg = img.sum(axis=2) > 0.05
                ys, xs = np.nonzero(fg)
                areas.append((np.ptp(ys) + 1) * (np.ptp(xs) + 1) / fg.size)
            means[cls] = np.mean(areas)
            # anti-aliased fringe inflates the bbox by a couple of pixels
            assert abs(means[cls] - expected) < 0.08
        assert 5 < means[1] / means[2] < 12

    def test_half_corr_mask_rate(self):
        # correlated draw plus coincidental random match: 0.5 + 0.5 * 0.5
        ds = data.generate_zoom_shortcut(zoom_cfg(p_corr=0.5, n_samples=10000))
        sigma = np.sqrt(10000 * 0.75 * 0.25) / 10000
        assert abs(ds.shortcut_mask.mean() - 0.75) <= 4 * sigma

    def test_deterministic(self):
        a = data.generate_zoom_shortcut(zoom_cfg(seed=5))
        b = data.generate_zoom_shortcut(zoom_cfg(seed=5))
        assert np.array_equal(a.images, b.images)

    def test_zoom_level_out_of_range(self):
        with pytest.raises(ConfigurationError):
            data.generate_zoom_shortcut(zoom_cfg(zoom_levels=[1.5, 0.3]))
        with pytest.raises(ConfigurationError):
            data.generate_zoom_shortcut(zoom_cfg(zoom_levels=[0.0, 0.3]))


class TestImageFolder:
    def _make_folder(self, tmp_path, spec):
        for cls, n in spec.items():
            d = tmp_path / cls
            d.mkdir()
            for i in range(n):
                Image.new("RGB", (64, 64), (i * 20 % 255, 0, 0)).save(
                    d / f"img_{i}.png")
        return tmp_path

    def test_enumeration(self, tmp_path):
        root = self._make_folder(tmp_path, {"a": 3, "b": 2})
        ds = data.load_image_folder(root, 32)
        assert len(ds) == 5
        assert ds.class_names == ["a", "b"]
        assert sorted(np.unique(ds.labels)) == [1, 2]

    def test_resize(self, tmp_path):
        root = self._make_folder(tmp_path, {"a": 1, "b": 1})
        ds = data.load_image_folder(root, 128)
        assert ds.images.shape == (2, 128, 128, 3)

    def test_empty_class_dir(self, tmp_path):
        root = self._make_folder(tmp_path, {"a": 1})
        (tmp_path / "empty").mkdir()
        with pytest.raises(IngestionError, match="empty"):
            data.load_image_folder(root, 32)


class TestIdx:
    def test_header_and_shape(self, tmp_path):
        payload = bytes([0, 0, 0x08, 3]) + (2).to_bytes(4, "big") \
            + (3).to_bytes(4, "big") + (4).to_bytes(4, "big") + bytes(range(24))
        p = tmp_path / "t.idx"
        p.write_bytes(payload)
        arr = data.parse_idx(p)
        assert arr.shape == (2, 3, 4)
        assert arr.dtype == np.uint8
        assert arr.ravel()[5] == 5

    def test_truncated_payload(self, tmp_path):
        payload = bytes([0, 0, 0x08, 1]) + (10).to_bytes(4, "big") + bytes(4)
        p = tmp_path / "t.idx"
        p.write_bytes(payload)
        with pytest.raises(IdxParseError) as exc:
            data.parse_idx(p)
        assert exc.value.offset == len(payload)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "t.idx"
        p.write_bytes(bytes([1, 0, 0x08, 1, 0, 0, 0, 0]))
        with pytest.raises(IdxParseError):
            data.parse_idx(p)

    def test_unsupported_type(self, tmp_path):
        p = tmp_path / "t.idx"
        p.write_bytes(bytes([0, 0, 0x42, 1, 0, 0, 0, 0]))
        with pytest.raises(IdxParseError) as exc:
            data.parse_idx(p)
        assert exc.value.offset == 2

    @pytest.mark.parametrize("dtype", ["u1", "i1", "i2", "i4", "f4", "f8"])
    def test_round_trip(self, tmp_path, dtype):
        rng = np.random.default_rng(0)
        if dtype.startswith("f"):
            arr = rng.normal(size=(3, 5)).astype(dtype)
        else:
            arr = rng.integers(0, 100, size=(3, 5)).astype(dtype)
        p = tmp_path / "rt.idx"
        data.write_idx(p, arr)
        back = data.parse_idx(p)
        assert back.dtype == arr.dtype
        assert np.array_equal(back, arr)


class TestSplit:
    def test_80_10_10(self):
        ds = data.generate_colored_shortcut(colored_cfg(
            n_samples=100, n_classes=2, palette=data.DEFAULT_PALETTE[:2]))
        tr, va, te = data.split(ds, (0.8, 0.1, 0.1), seed=0)
        assert (len(tr), len(va), len(te)) == (80, 10, 10)

    def test_single_class_10(self):
        imgs = np.zeros((10, 4, 4, 3), dtype=np.float32)
        ds = data.LabeledImageSet(
            images=imgs, labels=np.ones(10, dtype=np.int64),
            ids=np.array([f"s{i}" for i in range(10)]), class_names=["only"])
        tr, va, te = data.split(ds, (0.8, 0.1, 0.1), seed=0)
        assert (len(tr), len(va), len(te)) == (8, 1, 1)

    def test_disjoint_covering(self, tiny_colored):
        tr, va, te = data.split(tiny_colored, (0.8, 0.1, 0.1), seed=3)
        all_ids = np.concatenate([tr.ids, va.ids, te.ids])
        assert len(all_ids) == len(tiny_colored)
        assert len(set(all_ids)) == len(tiny_colored)

    def test_stratified_within_one(self, tiny_colored):
        tr, va, te = data.split(tiny_colored, (0.8, 0.1, 0.1), seed=3)
        for cls in range(1, 4):
            n_c = (tiny_colored.labels == cls).sum()
            assert abs((tr.labels == cls).sum() - 0.8 * n_c) <= 1

    def test_deterministic(self, tiny_colored):
        a = data.split(tiny_colored, (0.8, 0.1, 0.1), seed=5)
        b = data.split(tiny_colored, (0.8, 0.1, 0.1), seed=5)
        for x, y in zip(a, b):
            assert np.array_equal(x.ids, y.ids)

    def test_bad_ratios(self, tiny_colored):
        with pytest.raises(ConfigurationError):
            data.split(tiny_colored, (0.5, 0.1, 0.1), seed=0)

    def test_class_too_small(self):
        imgs = np.zeros((2, 4, 4, 3), dtype=np.float32)
        ds = data.LabeledImageSet(
            images=imgs, labels=np.ones(2, dtype=np.int64),
            ids=np.array(["a", "b"]), class_names=["only"])
        with pytest.raises(ConfigurationError):
            data.split(ds, (0.8, 0.1, 0.1), seed=0)


class TestArchive:
    def test_round_trip(self, tmp_path, tiny_colored):
        p = tmp_path / "ds.zip"
        data.save_archive(tiny_colored, p, config={"kind": "colored"}, seed=7)
        back, manifest = data.load_archive(p)
        assert np.array_equal(back.images, tiny_colored.images)
        assert np.array_equal(back.labels, tiny_colored.labels)
        assert np.array_equal(back.shortcut_mask, tiny_colored.shortcut_mask)
        assert manifest["seed"] == 7
        assert manifest["schema_version"] == data.ARCHIVE_SCHEMA_VERSION
