"""Linear classification probe on frozen latent means.

The probe trains softmax(theta^T mu + b) on stored posterior means; the
encoder is never touched. Per-dimension predictiveness is the sum of
absolute probe weights mapping that coordinate to the class logits.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .analysis import LatentTable
from .errors import ContractError


@dataclass
class ProbeConfig:
    max_epochs: int = 200
    learning_rate: float = 0.001
    batch_size: int = 32
    patience: int = 10
    seed: int = 0


@dataclass
class ProbeHead:
    weights: np.ndarray  # d x C
    bias: np.ndarray  # C
    epochs_trained: int = 0
    val_accuracy: float = 0.0

    @property
    def d(self) -> int:
        return self.weights.shape[0]

    @property
    def n_classes(self) -> int:
        return self.weights.shape[1]


def train_probe(train_latents: LatentTable, val_latents: LatentTable,
                config: ProbeConfig | None = None) -> ProbeHead:
    """Cross-entropy training with Adam and early stopping on val loss."""
    config = config or ProbeConfig()
    classes = np.unique(train_latents.labels)
    if len(classes) < 2:
        raise ContractError("probe training requires at least two classes")
    n_classes = int(train_latents.labels.max())
    d = train_latents.d

    torch.manual_seed(config.seed)
    gen = torch.Generator().manual_seed(config.seed)
    linear = torch.nn.Linear(d, n_classes)
    opt = torch.optim.Adam(linear.parameters(), lr=config.learning_rate)

    x_tr = torch.from_numpy(train_latents.mu.astype(np.float32))
    y_tr = torch.from_numpy(train_latents.labels.astype(np.int64) - 1)
    x_va = torch.from_numpy(val_latents.mu.astype(np.float32))
    y_va = torch.from_numpy(val_latents.labels.astype(np.int64) - 1)

    best_val = np.inf
    best_state = None
    best_epoch = -1
    epoch = -1
    for epoch in range(config.max_epochs):
        perm = torch.randperm(len(x_tr), generator=gen)
        linear.train()
        for i in range(0, len(perm), config.batch_size):
            sel = perm[i:i + config.batch_size]
            loss = F.cross_entropy(linear(x_tr[sel]), y_tr[sel])
            opt.zero_grad()
            loss.backward()
            opt.step()
        linear.eval()
        with torch.no_grad():
            val_loss = F.cross_entropy(linear(x_va), y_va).item()
        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_state = {k: v.clone() for k, v in linear.state_dict().items()}
        elif epoch - best_epoch >= config.patience:
            break
    linear.load_state_dict(best_state)
    with torch.no_grad():
        val_acc = (linear(x_va).argmax(dim=1) == y_va).float().mean().item()
    return ProbeHead(
        weights=linear.weight.detach().numpy().T.astype(np.float64),
        bias=linear.bias.detach().numpy().astype(np.float64),
        epochs_trained=epoch + 1,
        val_accuracy=val_acc,
    )


def predictiveness(head: ProbeHead, j: int) -> float:
    """Sum over classes of |theta_jc| for 1-based dimension j; bias excluded."""
    if not 1 <= j <= head.d:
        raise ContractError(f"dimension {j} outside 1..{head.d}")
    return float(np.abs(head.weights[j - 1]).sum())


def predictiveness_all(head: ProbeHead) -> np.ndarray:
    return np.abs(head.weights).sum(axis=1)


def probe_accuracy(head: ProbeHead, latents: LatentTable) -> float:
    """Argmax accuracy; logit ties resolve to the lower class index."""
    logits = latents.mu @ head.weights + head.bias
    pred = np.argmax(logits, axis=1) + 1  # argmax takes the first maximum
    return float(np.mean(pred == latents.labels))


def save_head(head: ProbeHead, path: str | Path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump({
            "weights": head.weights.tolist(),
            "bias": head.bias.tolist(),
            "epochs_trained": head.epochs_trained,
            "val_accuracy": head.val_accuracy,
        }, f)


def load_head(path: str | Path) -> ProbeHead:
    with open(path, encoding="utf-8") as f:
        rec = json.load(f)
    return ProbeHead(
        weights=np.asarray(rec["weights"], dtype=np.float64),
        bias=np.asarray(rec["bias"], dtype=np.float64),
        epochs_trained=rec["epochs_trained"],
        val_accuracy=rec["val_accuracy"],
    )
