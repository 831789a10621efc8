import numpy as np
import pytest

from latentscout import advgen, data
from latentscout.advgen import (AttackConfig, attack_dataset, crop_zoom_attack,
                                evaluate_attack, pad_zoom_attack)
from latentscout.errors import ConfigurationError, ContractError


def glyph_image(size=128, scale=0.3):
    return data._render(size, "circle", (255, 255, 255), scale)


class TestCropAttack:
    def test_geometry(self):
        x = np.zeros((128, 128, 3), dtype=np.float32)
        x[32:96, 32:96] = 1.0  # mark the central 64x64
        out = crop_zoom_attack(x, AttackConfig(crop_factor=0.5, output_size=128))
        assert out.shape == (128, 128, 3)
        assert out[64, 64].mean() > 0.99  # center of the marked region

    def test_identity_limit(self):
        x = glyph_image()
        out = crop_zoom_attack(x, AttackConfig(crop_factor=0.999,
                                               output_size=128))
        assert np.max(np.abs(out - x)) <= 2 / 255

    def test_foreground_area_grows(self):
        cfg = AttackConfig(crop_factor=0.5, output_size=128)
        x = glyph_image(scale=0.3)
        out = crop_zoom_attack(x, cfg)
        area = lambda im: (im.sum(axis=2) > 0.05).mean()
        assert area(out) >= (1 / cfg.crop_factor ** 2) * 0.8 * area(x)

    def test_crop_below_minimum(self):
        x = glyph_image(size=128)
        with pytest.raises(ContractError):
            crop_zoom_attack(np.zeros((32, 32, 3)),
                             AttackConfig(crop_factor=0.1, output_size=32))

    def test_label_preserving_centered_glyph(self):
        # glyph smaller than the crop window keeps all foreground in frame
        x = glyph_image(scale=0.3)
        fg_before = (x.sum(axis=2) > 0.05).sum()
        out = crop_zoom_attack(x, AttackConfig(crop_factor=0.5,
                                               output_size=64))
        fg_after = (out.sum(axis=2) > 0.05).sum()
        # after a 0.5 crop to half resolution, the glyph pixel count is
        # preserved up to resampling
        assert fg_after >= 0.99 * fg_before


class TestPadAttack:
    def test_geometry(self):
        x = np.zeros((128, 128, 3), dtype=np.float32)
        x[:, :] = 1.0
        out = pad_zoom_attack(x, AttackConfig(pad_pixels=32, output_size=128,
                                              fill_value=(0, 0, 0)))
        # original content occupies the central 2/3 per side
        inner = out[22:106, 22:106]
        assert inner.mean() > 0.98
        assert out[0, 0].mean() < 0.02

    def test_identity_limit(self):
        x = glyph_image()
        cfg = AttackConfig(pad_pixels=0, output_size=128)
        with pytest.raises(ContractError):
            pad_zoom_attack(x, cfg)

    def test_edge_replicate_borders(self):
        rng = np.random.default_rng(0)
        x = rng.random((16, 16, 3)).astype(np.float32)
        p = 4
        padded = np.pad(x, ((p, p), (p, p), (0, 0)), mode="edge")
        assert np.array_equal(padded[0, p:-p], x[0])
        assert np.array_equal(padded[:, 0][p:-p], x[:, 0])

    def test_content_fully_visible(self):
        x = glyph_image(scale=0.5)
        out = pad_zoom_attack(x, AttackConfig(pad_pixels=32, output_size=128))
        area = lambda im: (im.sum(axis=2) > 0.05).mean()
        # padding shrinks but never clips the glyph
        assert 0 < area(out) < area(x)

    def test_bad_config(self):
        with pytest.raises(ConfigurationError):
            AttackConfig(crop_factor=1.5)
        with pytest.raises(ConfigurationError):
            AttackConfig(pad_pixels=-1)


class TestTransformsPure:
    def test_deterministic(self):
        x = glyph_image()
        cfg = AttackConfig(crop_factor=0.5, output_size=128)
        assert np.array_equal(crop_zoom_attack(x, cfg),
                              crop_zoom_attack(x, cfg))

    def test_attack_dataset_preserves_labels(self, tiny_colored):
        cfg = AttackConfig(crop_factor=0.5, output_size=32)
        attacked = attack_dataset(tiny_colored, crop_zoom_attack, cfg)
        assert np.array_equal(attacked.labels, tiny_colored.labels)
        assert np.array_equal(attacked.ids, tiny_colored.ids)


@pytest.fixture(scope="module")
def small_zoom_classifier():
    cfg = data.SyntheticConfig(n_samples=240, image_size=32, n_classes=2,
                               p_corr=1.0, seed=1, zoom_levels=[0.8, 0.3])
    ds = data.generate_zoom_shortcut(cfg)
    tr, va, te = data.split(ds, (0.8, 0.1, 0.1), seed=1)
    clf = advgen.train_reference_cnn(
        tr, va, advgen.ClassifierConfig(seed=0, max_epochs=5))
    return clf, tr, va, te


class TestReferenceCnn:
    def test_one_epoch_bound(self, tiny_colored):
        tr, va, _ = data.split(tiny_colored, (0.8, 0.1, 0.1), seed=0)
        clf = advgen.train_reference_cnn(
            tr, va, advgen.ClassifierConfig(seed=0, max_epochs=1))
        assert len(clf.history) == 1

    def test_prediction_deterministic(self, small_zoom_classifier):
        clf, tr, *_ = small_zoom_classifier
        a = clf.predict(tr.images[:16])
        b = clf.predict(tr.images[:16])
        assert np.array_equal(a, b)

    def test_learns_easy_dataset(self, small_zoom_classifier):
        clf, tr, va, te = small_zoom_classifier
        assert advgen.classifier_accuracy(clf, te) >= 0.9


class TestEvaluateAttack:
    def test_identity_attack_zero_delta(self, small_zoom_classifier):
        clf, _, _, te = small_zoom_classifier
        report = evaluate_attack(clf, te, te)
        assert all(d == 0.0 for d in report.delta.values())

    def test_label_mismatch_rejected(self, small_zoom_classifier):
        clf, tr, _, te = small_zoom_classifier
        with pytest.raises(ContractError):
            evaluate_attack(clf, te, tr.subset(np.arange(len(te))))

    def test_matches_loop_oracle(self, small_zoom_classifier):
        clf, _, _, te = small_zoom_classifier
        cfg = AttackConfig(crop_factor=0.5, output_size=32)
        attacked = attack_dataset(te, crop_zoom_attack, cfg)
        report = evaluate_attack(clf, te, attacked, cfg)
        preds = clf.predict(attacked.images)
        for c in np.unique(te.labels):
            hits = total = 0
            for i in range(len(te)):
                if te.labels[i] == c:
                    total += 1
                    hits += preds[i] == c
            assert report.adversarial_accuracy[int(c)] == pytest.approx(
                hits / total)

    def test_report_json(self, small_zoom_classifier, tmp_path):
        import json

        clf, _, _, te = small_zoom_classifier
        report = evaluate_attack(clf, te, te)
        p = tmp_path / "attack.json"
        report.save(p)
        loaded = json.loads(p.read_text())
        assert set(loaded) == {"clean_accuracy", "adversarial_accuracy",
                               "delta", "n_per_class", "config_hash"}
