"""Shortcut adversarial examples via zoom manipulation, and their evaluation.

Cropping the center of an image mimics a close-up shot; padding with
background mimics a distant shot. Applied to a dataset whose classifier
learned a zoom-level shortcut, these label-preserving transforms degrade
accuracy without any gradient computation.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from PIL import Image

from .data import LabeledImageSet
from .errors import ConfigurationError, ContractError, TrainingError

_CNN_CHANNELS = [32, 64, 128, 256, 512]


@dataclass
class AttackConfig:
    crop_factor: float = 0.5
    pad_pixels: int = 0
    fill_value: tuple[int, int, int] | str = "edge-replicate"
    output_size: int = 128

    def __post_init__(self):
        if not 0.0 < self.crop_factor < 1.0:
            raise ConfigurationError("crop_factor must lie in (0,1)")
        if self.pad_pixels < 0:
            raise ConfigurationError("pad_pixels must be >= 0")


@dataclass
class AttackReport:
    clean_accuracy: dict[int, float]
    adversarial_accuracy: dict[int, float]
    delta: dict[int, float]
    n_per_class: dict[int, int]
    config_hash: str

    def save(self, path: str | Path):
        with open(path, "w", encoding="utf-8") as f:
            json.dump({
                "clean_accuracy": self.clean_accuracy,
                "adversarial_accuracy": self.adversarial_accuracy,
                "delta": self.delta,
                "n_per_class": self.n_per_class,
                "config_hash": self.config_hash,
            }, f, indent=2)


def _resize(img: np.ndarray, size: int) -> np.ndarray:
    pil = Image.fromarray(np.clip(img * 255.0 + 0.5, 0, 255).astype(np.uint8))
    out = pil.resize((size, size), Image.BILINEAR)
    return np.asarray(out, dtype=np.float32) / 255.0


def crop_zoom_attack(x: np.ndarray, cfg: AttackConfig) -> np.ndarray:
    """Extract the central crop_factor fraction and rescale to output_size."""
    h, w = x.shape[:2]
    crop_h = int(round(h * cfg.crop_factor))
    crop_w = int(round(w * cfg.crop_factor))
    if min(crop_h, crop_w) < 8:
        raise ContractError(
            f"crop of {crop_h}x{crop_w} below the 8-pixel minimum"
        )
    y0 = (h - crop_h) // 2
    x0 = (w - crop_w) // 2
    return _resize(x[y0:y0 + crop_h, x0:x0 + crop_w], cfg.output_size)


def pad_zoom_attack(x: np.ndarray, cfg: AttackConfig) -> np.ndarray:
    """Pad all sides with background fill and rescale to output_size."""
    if cfg.pad_pixels < 1:
        raise ContractError("pad_zoom_attack requires pad_pixels >= 1")
    p = cfg.pad_pixels
    if cfg.fill_value == "edge-replicate":
        padded = np.pad(x, ((p, p), (p, p), (0, 0)), mode="edge")
    else:
        fill = np.asarray(cfg.fill_value, dtype=np.float32) / 255.0
        padded = np.empty((x.shape[0] + 2 * p, x.shape[1] + 2 * p, 3),
                          dtype=np.float32)
        padded[:] = fill
        padded[p:p + x.shape[0], p:p + x.shape[1]] = x
    return _resize(padded, cfg.output_size)


def attack_dataset(dataset: LabeledImageSet, transform, cfg: AttackConfig
                   ) -> LabeledImageSet:
    """Apply a transform image-wise; labels and ids are preserved."""
    images = np.stack([transform(img, cfg) for img in dataset.images])
    return LabeledImageSet(
        images=images,
        labels=dataset.labels.copy(),
        ids=dataset.ids.copy(),
        class_names=list(dataset.class_names),
        shortcut_mask=None,
    )


class ReferenceCNN(nn.Module):
    """Five 3x3 conv layers (32..512 filters), each with ReLU + max pooling."""

    def __init__(self, image_size: int, n_classes: int):
        super().__init__()
        layers, in_ch = [], 3
        for out_ch in _CNN_CHANNELS:
            layers += [
                nn.Conv2d(in_ch, out_ch, 3, padding=1),
                nn.ReLU(inplace=True),
                nn.MaxPool2d(2),
            ]
            in_ch = out_ch
        self.features = nn.Sequential(*layers)
        spatial = image_size // 2 ** len(_CNN_CHANNELS)
        if spatial < 1:
            raise ConfigurationError(
                f"image_size {image_size} too small for 5 pooling stages"
            )
        self.head = nn.Linear(_CNN_CHANNELS[-1] * spatial * spatial, n_classes)

    def forward(self, x):
        return self.head(self.features(x).flatten(1))


@dataclass
class ClassifierConfig:
    max_epochs: int = 20
    learning_rate: float = 0.001
    batch_size: int = 32
    patience: int = 10
    seed: int = 0


@dataclass
class TrainedClassifier:
    model: ReferenceCNN
    config: ClassifierConfig
    history: list[dict] = field(default_factory=list)

    def __post_init__(self):
        self.model.eval()
        for p in self.model.parameters():
            p.requires_grad_(False)

    def predict(self, images: np.ndarray, batch_size: int = 128) -> np.ndarray:
        """1-based class predictions; logit ties go to the lower class index."""
        x = torch.from_numpy(
            np.ascontiguousarray(images.transpose(0, 3, 1, 2)).astype(np.float32))
        preds = []
        with torch.no_grad():
            for i in range(0, len(x), batch_size):
                logits = self.model(x[i:i + batch_size])
                preds.append(logits.argmax(dim=1).numpy() + 1)
        return np.concatenate(preds)


def train_reference_cnn(train_set: LabeledImageSet, val_set: LabeledImageSet,
                        config: ClassifierConfig | None = None
                        ) -> TrainedClassifier:
    """Cross-entropy training with Adam and early stopping on val loss."""
    config = config or ClassifierConfig()
    if len(train_set) == 0 or len(val_set) == 0:
        raise ContractError("train and val splits must be nonempty")
    torch.manual_seed(config.seed)
    gen = torch.Generator().manual_seed(config.seed)
    size = train_set.images.shape[1]
    model = ReferenceCNN(size, train_set.n_classes)
    opt = torch.optim.Adam(model.parameters(), lr=config.learning_rate)

    x_tr = torch.from_numpy(
        np.ascontiguousarray(train_set.images.transpose(0, 3, 1, 2)).astype(np.float32))
    y_tr = torch.from_numpy(train_set.labels.astype(np.int64) - 1)
    x_va = torch.from_numpy(
        np.ascontiguousarray(val_set.images.transpose(0, 3, 1, 2)).astype(np.float32))
    y_va = torch.from_numpy(val_set.labels.astype(np.int64) - 1)

    history, best_val, best_state, best_epoch = [], np.inf, None, -1
    for epoch in range(config.max_epochs):
        model.train()
        perm = torch.randperm(len(x_tr), generator=gen)
        for i in range(0, len(perm), config.batch_size):
            sel = perm[i:i + config.batch_size]
            loss = F.cross_entropy(model(x_tr[sel]), y_tr[sel])
            if not torch.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.step()
        model.eval()
        with torch.no_grad():
            val_losses = []
            for i in range(0, len(x_va), config.batch_size):
                val_losses.append(F.cross_entropy(
                    model(x_va[i:i + config.batch_size]),
                    y_va[i:i + config.batch_size], reduction="sum").item())
            val_loss = sum(val_losses) / len(x_va)
        history.append({"epoch": epoch, "val_loss": val_loss})
        if val_loss < best_val:
            best_val, best_epoch = val_loss, epoch
            best_state = copy.deepcopy(model.state_dict())
        elif epoch - best_epoch >= config.patience:
            break
    model.load_state_dict(best_state)
    return TrainedClassifier(model=model, config=config, history=history)


def classifier_accuracy(clf: TrainedClassifier, dataset: LabeledImageSet) -> float:
    return float(np.mean(clf.predict(dataset.images) == dataset.labels))


def evaluate_attack(clf: TrainedClassifier, clean_set: LabeledImageSet,
                    attacked_set: LabeledImageSet,
                    cfg: AttackConfig | None = None) -> AttackReport:
    """Per-class accuracy on clean vs attacked inputs and the deltas."""
    if not np.array_equal(clean_set.labels, attacked_set.labels):
        raise ContractError("clean and attacked sets must carry identical labels")
    pred_clean = clf.predict(clean_set.images)
    pred_adv = clf.predict(attacked_set.images)
    clean_acc, adv_acc, delta, counts = {}, {}, {}, {}
    for c in np.unique(clean_set.labels):
        sel = clean_set.labels == c
        c = int(c)
        counts[c] = int(sel.sum())
        clean_acc[c] = float(np.mean(pred_clean[sel] == c))
        adv_acc[c] = float(np.mean(pred_adv[sel] == c))
        delta[c] = clean_acc[c] - adv_acc[c]
    cfg_hash = hashlib.sha256(
        json.dumps(asdict(cfg) if cfg else {}, sort_keys=True, default=str).encode()
    ).hexdigest()[:16]
    return AttackReport(
        clean_accuracy=clean_acc, adversarial_accuracy=adv_acc,
        delta=delta, n_per_class=counts, config_hash=cfg_hash,
    )
