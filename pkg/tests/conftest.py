import numpy as np
import pytest
import torch

from latentscout import data, vae

torch.set_num_threads(max(1, torch.get_num_threads()))


@pytest.fixture(scope="session")
def tiny_colored():
    cfg = data.SyntheticConfig(
        n_samples=150, image_size=32, n_classes=3, p_corr=0.95, seed=7,
        palette=data.DEFAULT_PALETTE[:3],
    )
    return data.generate_colored_shortcut(cfg)


@pytest.fixture(scope="session")
def tiny_splits(tiny_colored):
    return data.split(tiny_colored, (0.8, 0.1, 0.1), seed=7)


@pytest.fixture(scope="session")
def tiny_vae(tiny_splits):
    train_set, val_set, _ = tiny_splits
    cfg = vae.TrainConfig(latent_dim=4, beta=1.0, image_size=32,
                          max_epochs=2, seed=11)
    return vae.train(train_set, val_set, cfg)


@pytest.fixture(scope="session")
def tiny_latents(tiny_vae, tiny_splits):
    return vae.encode_dataset(tiny_vae, tiny_splits[0])
