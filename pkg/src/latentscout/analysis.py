"""Latent-space statistics: class separation per dimension and ranking.

Given per-sample posterior means, each latent coordinate is scored by the
largest 1-D Wasserstein distance between any two class-conditional empirical
distributions (MPWD). Class-conditional densities are estimated with a
Gaussian KDE for visualization.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .errors import ContractError


@dataclass
class LatentTable:
    """Per-sample posterior means/stds aligned with labels and sample ids."""

    mu: np.ndarray  # N x d
    sigma: np.ndarray  # N x d, positive
    labels: np.ndarray  # N, ints 1..C
    ids: np.ndarray  # N, str

    def __post_init__(self):
        n, d = np.asarray(self.mu).shape
        if self.sigma.shape != (n, d) or len(self.labels) != n or len(self.ids) != n:
            raise ContractError("latent table fields must be row-aligned")

    def __len__(self) -> int:
        return len(self.mu)

    @property
    def d(self) -> int:
        return self.mu.shape[1]

    def class_values(self, j: int) -> dict[int, np.ndarray]:
        """mu values of 1-based dimension j, grouped by class label."""
        col = self.mu[:, j - 1]
        return {int(c): col[self.labels == c] for c in np.unique(self.labels)}


@dataclass
class DimensionScore:
    dim: int  # 1-based
    mpwd: float
    predictiveness: float
    variance: float
    mpwd_rank: int
    pred_rank: int
    z_min: float
    z_max: float
    above_threshold: bool


@dataclass
class KdeCurve:
    dim: int
    cls: int
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float


def wasserstein1(a: np.ndarray, b: np.ndarray) -> float:
    """Exact W1 between two 1-D empirical distributions.

    Integrates |F_a^{-1}(q) - F_b^{-1}(q)| over q in [0,1] via the equivalent
    CDF-difference form on the merged sorted support.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise ContractError("wasserstein1 requires nonempty samples")
    values = np.concatenate([a, b])
    order = np.argsort(values, kind="mergesort")
    values = values[order]
    # step in F_a minus step in F_b at each point
    steps = np.where(order < a.size, 1.0 / a.size, -1.0 / b.size)
    cdf_diff = np.cumsum(steps)[:-1]
    return float(np.sum(np.abs(cdf_diff) * np.diff(values)))


def mpwd(latents: LatentTable, j: int) -> float:
    """Max pairwise W1 distance between class-conditional samples of dim j."""
    groups = latents.class_values(j)
    classes = sorted(groups)
    if len(classes) < 2:
        raise ContractError("MPWD needs at least two classes")
    best = 0.0
    for i, c in enumerate(classes):
        for c2 in classes[i + 1:]:
            best = max(best, wasserstein1(groups[c], groups[c2]))
    return best


def bandwidth(samples: np.ndarray) -> float:
    """Silverman's rule: 0.9 * min(std, IQR/1.34) * n^(-1/5), floored at 1e-6."""
    samples = np.asarray(samples, dtype=np.float64).ravel()
    n = samples.size
    std = samples.std(ddof=1) if n > 1 else 0.0
    q75, q25 = np.percentile(samples, [75, 25])
    spread = min(std, (q75 - q25) / 1.34)
    if spread <= 0:
        warnings.warn("zero-spread samples; bandwidth floored at 1e-6")
        return 1e-6
    return max(0.9 * spread * n ** (-0.2), 1e-6)


def kde(samples: np.ndarray, grid: np.ndarray, h: float,
        dim: int = 0, cls: int = 0) -> KdeCurve:
    """Gaussian kernel density estimate of samples evaluated on grid."""
    if h <= 0:
        raise ContractError("bandwidth must be positive")
    samples = np.asarray(samples, dtype=np.float64).ravel()
    if samples.size == 0:
        raise ContractError("kde requires nonempty samples")
    grid = np.asarray(grid, dtype=np.float64)
    z = (grid[:, None] - samples[None, :]) / h
    density = np.exp(-0.5 * z ** 2).sum(axis=1) / (samples.size * h * np.sqrt(2 * np.pi))
    return KdeCurve(dim=dim, cls=cls, grid=grid, density=density, bandwidth=h)


def build_scoreboard(latents: LatentTable,
                     predictiveness: np.ndarray | None = None,
                     threshold_factor: float = 3.0) -> list[DimensionScore]:
    """Score every latent dimension and rank by MPWD and predictiveness.

    Rank 1 is the largest score; ties break toward the smaller dim index.
    A dimension is flagged above_threshold when its MPWD exceeds
    threshold_factor times the median MPWD.
    """
    d = latents.d
    mpwds = np.array([mpwd(latents, j) for j in range(1, d + 1)])
    preds = np.zeros(d) if predictiveness is None else np.asarray(predictiveness, float)
    if preds.shape != (d,):
        raise ContractError(f"predictiveness must have length {d}")
    variances = latents.mu.var(axis=0)
    median = float(np.median(mpwds))
    mpwd_rank = _ranks_desc(mpwds)
    pred_rank = _ranks_desc(preds)
    return [
        DimensionScore(
            dim=j + 1,
            mpwd=float(mpwds[j]),
            predictiveness=float(preds[j]),
            variance=float(variances[j]),
            mpwd_rank=int(mpwd_rank[j]),
            pred_rank=int(pred_rank[j]),
            z_min=float(latents.mu[:, j].min()),
            z_max=float(latents.mu[:, j].max()),
            above_threshold=bool(mpwds[j] > threshold_factor * median),
        )
        for j in range(d)
    ]


def _ranks_desc(scores: np.ndarray) -> np.ndarray:
    """Rank 1..d for descending scores, ties broken by lower index."""
    order = np.lexsort((np.arange(len(scores)), -scores))
    ranks = np.empty(len(scores), dtype=int)
    ranks[order] = np.arange(1, len(scores) + 1)
    return ranks


def rank_by_mpwd(scoreboard: list[DimensionScore], k: int) -> list[int]:
    """The k dims (1-based) with the largest MPWD, ties by lower dim index."""
    if k > len(scoreboard):
        raise ContractError(f"k={k} exceeds latent dimension {len(scoreboard)}")
    ordered = sorted(scoreboard, key=lambda s: s.mpwd_rank)
    return [s.dim for s in ordered[:k]]


def rank_by_predictiveness(scoreboard: list[DimensionScore], k: int) -> list[int]:
    """The k dims with the largest probe predictiveness."""
    if k > len(scoreboard):
        raise ContractError(f"k={k} exceeds latent dimension {len(scoreboard)}")
    ordered = sorted(scoreboard, key=lambda s: s.pred_rank)
    return [s.dim for s in ordered[:k]]


def save_latent_table(latents: LatentTable, path: str | Path):
    """CSV with header id,label,mu_1..mu_d,sigma_1..sigma_d; round-trip exact."""
    d = latents.d
    header = ["id", "label"] + [f"mu_{j}" for j in range(1, d + 1)] \
        + [f"sigma_{j}" for j in range(1, d + 1)]
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(header)
        for i in range(len(latents)):
            row = [str(latents.ids[i]), int(latents.labels[i])]
            row += [repr(float(v)) for v in latents.mu[i]]
            row += [repr(float(v)) for v in latents.sigma[i]]
            w.writerow(row)


def load_latent_table(path: str | Path) -> LatentTable:
    with open(path, newline="", encoding="utf-8") as f:
        r = csv.reader(f)
        header = next(r)
        d = (len(header) - 2) // 2
        ids, labels, mus, sigmas = [], [], [], []
        for row in r:
            ids.append(row[0])
            labels.append(int(row[1]))
            mus.append([float(v) for v in row[2:2 + d]])
            sigmas.append([float(v) for v in row[2 + d:2 + 2 * d]])
    return LatentTable(
        mu=np.asarray(mus, dtype=np.float64),
        sigma=np.asarray(sigmas, dtype=np.float64),
        labels=np.asarray(labels, dtype=np.int64),
        ids=np.asarray(ids),
    )


def save_scoreboard(scoreboard: list[DimensionScore], path: str | Path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump([asdict(s) for s in scoreboard], f, indent=2)


def load_scoreboard(path: str | Path) -> list[DimensionScore]:
    with open(path, encoding="utf-8") as f:
        return [DimensionScore(**rec) for rec in json.load(f)]
