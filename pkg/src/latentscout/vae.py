"""Beta-VAE: model, loss, training with early stopping, checkpointing.

The encoder maps an image to the mean and log-variance of a diagonal Gaussian
posterior; the decoder maps a latent vector back to a sigmoid image. Training
minimizes reconstruction NLL + beta * KL to the standard normal prior.
"""

from __future__ import annotations

import copy
import json
import hashlib
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .analysis import LatentTable
from .data import LabeledImageSet
from .errors import ConfigurationError, ContractError, TrainingError

CHECKPOINT_SCHEMA_VERSION = 1

# Channel progression of the conv stacks; decoder mirrors it downward.
_ENC_CHANNELS = [32, 64, 128, 256, 512]
_DEC_CHANNELS = [512, 256, 128, 64, 32]


@dataclass
class TrainConfig:
    latent_dim: int
    beta: float
    image_size: int
    max_epochs: int
    learning_rate: float = 0.001
    batch_size: int = 32
    patience: int = 10
    seed: int = 0
    encoder_kind: str = "small_conv"  # or "resnet_backbone"
    recon_loss: str = "bce"  # or "sse"
    backbone_weights: str | None = None  # required for resnet_backbone

    def __post_init__(self):
        if self.latent_dim < 1:
            raise ConfigurationError("latent_dim must be >= 1")
        if self.beta <= 0:
            raise ConfigurationError("beta must be positive")
        if self.patience < 1:
            raise ConfigurationError("patience must be >= 1")
        if self.image_size % 32 != 0:
            raise ConfigurationError("image_size must be a multiple of 32")
        if self.encoder_kind not in ("small_conv", "resnet_backbone"):
            raise ConfigurationError(f"unknown encoder_kind {self.encoder_kind!r}")


@dataclass
class PosteriorParams:
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        if np.any(self.sigma <= 0):
            raise ContractError("posterior sigma must be strictly positive")


class BetaVAE(nn.Module):
    """Conv encoder with mu/log-variance heads and a transposed-conv decoder."""

    def __init__(self, config: TrainConfig):
        super().__init__()
        self.config = config
        d, size = config.latent_dim, config.image_size
        self.base = size // 32  # spatial extent after 5 stride-2 stages

        if config.encoder_kind == "small_conv":
            layers, in_ch = [], 3
            for out_ch in _ENC_CHANNELS:
                layers += [
                    nn.Conv2d(in_ch, out_ch, 3, stride=2, padding=1),
                    nn.BatchNorm2d(out_ch),
                    nn.ReLU(inplace=True),
                ]
                in_ch = out_ch
            self.encoder = nn.Sequential(*layers, nn.Flatten())
            feat = _ENC_CHANNELS[-1] * self.base * self.base
        else:
            from torchvision.models import resnet18

            backbone = resnet18(weights=None)
            if config.backbone_weights:
                state = torch.load(config.backbone_weights, map_location="cpu")
                backbone.load_state_dict(state)
            backbone.fc = nn.Identity()
            self.encoder = backbone
            feat = 512
        self.fc_mu = nn.Linear(feat, d)
        self.fc_logvar = nn.Linear(feat, d)

        # one projection layer adapts z to the fixed transposed-conv stack
        proj_ch = 2 * _DEC_CHANNELS[0]
        self.fc_decode = nn.Linear(d, proj_ch * self.base * self.base)
        dec, in_ch = [], proj_ch
        for out_ch in _DEC_CHANNELS:
            dec += [
                nn.ConvTranspose2d(in_ch, out_ch, 3, stride=2, padding=1,
                                   output_padding=1),
                nn.BatchNorm2d(out_ch),
                nn.ReLU(inplace=True),
            ]
            in_ch = out_ch
        dec += [nn.Conv2d(in_ch, 3, 3, padding=1), nn.Sigmoid()]
        self.decoder = nn.Sequential(*dec)

    def encode_tensor(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        feat = self.encoder(x)
        return self.fc_mu(feat), self.fc_logvar(feat)

    def decode_tensor(self, z: torch.Tensor) -> torch.Tensor:
        proj_ch = 2 * _DEC_CHANNELS[0]
        h = self.fc_decode(z).view(-1, proj_ch, self.base, self.base)
        return self.decoder(h)


@dataclass
class TrainedVAE:
    """Frozen training result: model in eval mode plus its provenance."""

    model: BetaVAE
    config: TrainConfig
    history: list[dict] = field(default_factory=list)

    def __post_init__(self):
        self.model.eval()
        for p in self.model.parameters():
            p.requires_grad_(False)

    def parameter_hash(self) -> str:
        h = hashlib.sha256()
        for name, p in sorted(self.model.state_dict().items()):
            h.update(name.encode())
            h.update(p.detach().cpu().numpy().tobytes())
        return h.hexdigest()


def _to_tensor(images: np.ndarray) -> torch.Tensor:
    """N x h x w x c float array in [0,1] -> N x c x h x w tensor."""
    arr = np.asarray(images, dtype=np.float32)
    if arr.ndim == 3:
        arr = arr[None]
    return torch.from_numpy(np.ascontiguousarray(arr.transpose(0, 3, 1, 2)))


def encode(trained: TrainedVAE, x: np.ndarray) -> PosteriorParams:
    """Posterior parameters for a single image (h x w x c in [0,1])."""
    size = trained.config.image_size
    x = np.asarray(x)
    if x.shape != (size, size, 3):
        raise ContractError(f"expected image shape {(size, size, 3)}, got {x.shape}")
    with torch.no_grad():
        mu, logvar = trained.model.encode_tensor(_to_tensor(x))
    return PosteriorParams(
        mu=mu[0].numpy().astype(np.float64),
        sigma=np.exp(0.5 * logvar[0].numpy().astype(np.float64)),
    )


def decode(trained: TrainedVAE, z: np.ndarray) -> np.ndarray:
    """Decode a latent vector to an h x w x c image in [0,1]."""
    z = np.asarray(z, dtype=np.float32)
    if z.shape != (trained.config.latent_dim,):
        raise ContractError(
            f"expected latent vector of length {trained.config.latent_dim}"
        )
    with torch.no_grad():
        out = trained.model.decode_tensor(torch.from_numpy(z)[None])
    return out[0].permute(1, 2, 0).numpy().astype(np.float64)


def reparameterize(p: PosteriorParams, eps: np.ndarray) -> np.ndarray:
    """z = mu + sigma * eps."""
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != p.mu.shape:
        raise ContractError("eps must match the posterior dimensionality")
    return p.mu + p.sigma * eps


def kl_divergence(p: PosteriorParams) -> float:
    """KL(N(mu, sigma^2 I) || N(0, I)), closed form."""
    mu = np.asarray(p.mu, dtype=np.float64)
    sigma = np.asarray(p.sigma, dtype=np.float64)
    if np.any(sigma <= 0):
        raise ContractError("sigma must be strictly positive")
    var = sigma ** 2
    return float(-0.5 * np.sum(1.0 + np.log(var) - var - mu ** 2))


def _recon_nll(x_hat: torch.Tensor, x: torch.Tensor, kind: str) -> torch.Tensor:
    """Per-sample reconstruction loss summed over pixels, averaged over batch."""
    if kind == "bce":
        # clamp bound must stay representable in the working precision
        tiny = 1e-12 if x_hat.dtype == torch.float64 else 1e-7
        x_hat = x_hat.clamp(tiny, 1 - tiny)
        nll = -(x * torch.log(x_hat) + (1 - x) * torch.log(1 - x_hat))
    elif kind == "sse":
        nll = (x_hat - x) ** 2
    else:
        raise ConfigurationError(f"unknown recon_loss {kind!r}")
    return nll.flatten(1).sum(dim=1).mean()


def loss(model: BetaVAE, x_batch: torch.Tensor,
         eps: torch.Tensor | None = None,
         generator: torch.Generator | None = None
         ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """(total, kl_term, recon_term); total = recon + beta * kl.

    eps fixes the reparameterization noise (deterministic loss for gradient
    checks); when None it is sampled.
    """
    if x_batch.numel() == 0:
        raise ContractError("empty batch")
    mu, logvar = model.encode_tensor(x_batch)
    if eps is None:
        eps = torch.randn(mu.shape, generator=generator, dtype=mu.dtype)
    z = mu + torch.exp(0.5 * logvar) * eps
    x_hat = model.decode_tensor(z)
    recon = _recon_nll(x_hat, x_batch, model.config.recon_loss)
    kl = (-0.5 * (1 + logvar - logvar.exp() - mu ** 2).sum(dim=1)).mean()
    total = recon + model.config.beta * kl
    return total, kl, recon


def _epoch_val_loss(model: BetaVAE, x: torch.Tensor, batch_size: int) -> tuple:
    model.eval()
    totals = []
    with torch.no_grad():
        for i in range(0, len(x), batch_size):
            batch = x[i:i + batch_size]
            # eps=0: evaluate at the posterior mean for a deterministic metric
            t, k, r = loss(model, batch, eps=torch.zeros(
                len(batch), model.config.latent_dim))
            totals.append((t.item() * len(batch), k.item() * len(batch),
                           r.item() * len(batch)))
    n = len(x)
    sums = np.sum(totals, axis=0)
    return sums[0] / n, sums[1] / n, sums[2] / n


def train(train_set: LabeledImageSet, val_set: LabeledImageSet,
          config: TrainConfig, log_path: str | Path | None = None) -> TrainedVAE:
    """Adam optimization with early stopping on validation loss.

    Returns the parameters from the best-validation epoch. Writes one JSON
    record per epoch to log_path when given.
    """
    if len(train_set) == 0 or len(val_set) == 0:
        raise ContractError("train and val splits must be nonempty")
    torch.manual_seed(config.seed)
    model = BetaVAE(config)
    opt = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    gen = torch.Generator().manual_seed(config.seed)

    x_train = _to_tensor(train_set.images)
    x_val = _to_tensor(val_set.images)

    history: list[dict] = []
    best_val = np.inf
    best_state = None
    best_epoch = -1
    log_file = open(log_path, "w") if log_path else None
    try:
        for epoch in range(config.max_epochs):
            model.train()
            perm = torch.randperm(len(x_train), generator=gen)
            train_losses = []
            for i in range(0, len(perm), config.batch_size):
                batch = x_train[perm[i:i + config.batch_size]]
                total, kl, recon = loss(model, batch, generator=gen)
                if not torch.isfinite(total):
                    raise TrainingError(f"non-finite loss at epoch {epoch}")
                opt.zero_grad()
                total.backward()
                opt.step()
                train_losses.append(total.item() * len(batch))
            train_loss = sum(train_losses) / len(x_train)
            val_loss, val_kl, val_recon = _epoch_val_loss(
                model, x_val, config.batch_size)
            if not np.isfinite(val_loss):
                raise TrainingError(f"non-finite validation loss at epoch {epoch}")
            record = {
                "epoch": epoch,
                "train_loss": train_loss,
                "val_loss": val_loss,
                "kl_term": val_kl,
                "recon_term": val_recon,
            }
            history.append(record)
            if log_file:
                log_file.write(json.dumps(record) + "\n")
                log_file.flush()
            if val_loss < best_val:
                best_val = val_loss
                best_epoch = epoch
                best_state = copy.deepcopy(model.state_dict())
            elif epoch - best_epoch >= config.patience:
                break
    finally:
        if log_file:
            log_file.close()
    model.load_state_dict(best_state)
    return TrainedVAE(model=model, config=config, history=history)


def encode_dataset(trained: TrainedVAE, dataset: LabeledImageSet,
                   batch_size: int = 128) -> LatentTable:
    """Posterior parameters for every sample, order preserved."""
    if len(dataset) == 0:
        raise ContractError("dataset must be nonempty")
    size = trained.config.image_size
    if dataset.images.shape[1:] != (size, size, 3):
        raise ContractError(
            f"dataset images {dataset.images.shape[1:]} do not match "
            f"model image_size {size}"
        )
    mus, sigmas = [], []
    x = _to_tensor(dataset.images)
    with torch.no_grad():
        for i in range(0, len(x), batch_size):
            mu, logvar = trained.model.encode_tensor(x[i:i + batch_size])
            mus.append(mu.numpy().astype(np.float64))
            sigmas.append(np.exp(0.5 * logvar.numpy().astype(np.float64)))
    return LatentTable(
        mu=np.concatenate(mus),
        sigma=np.concatenate(sigmas),
        labels=dataset.labels.copy(),
        ids=dataset.ids.copy(),
    )


@dataclass
class DimensionVarianceReport:
    variances: np.ndarray  # per-dim variance of mu
    sigma_means: np.ndarray  # per-dim mean posterior sigma
    flagged: list[int]  # 1-based dims considered uninformative
    recommendation: str  # "increase_beta" | "decrease_latent_dim" | "decrease_beta"


def suggest_hyperparams(trained: TrainedVAE, latents: LatentTable,
                        variance_floor: float = 0.05) -> DimensionVarianceReport:
    """Flag collapsed dimensions and recommend the next hyperparameter move.

    A dimension is uninformative when the variance of its posterior mean falls
    below variance_floor, or its mean posterior sigma deviates from the prior's
    by more than 50%.
    """
    variances = latents.mu.var(axis=0)
    sigma_means = latents.sigma.mean(axis=0)
    flagged = sorted(
        set(np.flatnonzero(variances < variance_floor) + 1)
        | set(np.flatnonzero(np.abs(sigma_means - 1.0) > 0.5) + 1)
    )
    if not flagged:
        rec = "increase_beta"
    elif trained.config.beta <= 1.0:
        rec = "decrease_latent_dim"
    else:
        rec = "decrease_beta"
    return DimensionVarianceReport(
        variances=variances, sigma_means=sigma_means,
        flagged=[int(j) for j in flagged], recommendation=rec,
    )


def save_checkpoint(trained: TrainedVAE, path: str | Path):
    torch.save({
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "config": json.dumps(asdict(trained.config)),
        "state_dict": trained.model.state_dict(),
        "history": trained.history,
    }, path)


def load_checkpoint(path: str | Path) -> TrainedVAE:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("schema_version") != CHECKPOINT_SCHEMA_VERSION:
        raise ConfigurationError(
            f"checkpoint schema {payload.get('schema_version')} not supported "
            f"(expected {CHECKPOINT_SCHEMA_VERSION})"
        )
    config = TrainConfig(**json.loads(payload["config"]))
    model = BetaVAE(config)
    model.load_state_dict(payload["state_dict"])
    return TrainedVAE(model=model, config=config, history=payload["history"])
