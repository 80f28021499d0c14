"""Seeded synthetic data: class-clustered embeddings and labelling rasters.

Gaussian blobs stand in for backbone embeddings; class centroids sit on a
random orthogonal frame scaled so every pair is at least ``separation``
apart (in within-class standard deviations), which makes task difficulty a
single dial.  The raster fixtures give every class a dedicated mask region
with heatmaps concentrated on it, so labelling has an unambiguous answer.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import EmbeddingDataset
from .labeller import Heatmap, SegmentationMask


@dataclass
class SynthConfig:
    classes: int = 4
    dim: int = 32
    per_class: int = 200
    separation: float = 4.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.classes < 2:
            raise ValueError(f"need at least 2 classes, got {self.classes}")
        if self.dim < 2:
            raise ValueError(f"need dimension >= 2, got {self.dim}")
        if self.per_class < 2:
            raise ValueError(f"need at least 2 samples per class, got {self.per_class}")
        if self.separation <= 0.0:
            raise ValueError(f"separation must be positive, got {self.separation}")


def _centroids(cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    raw = rng.standard_normal((cfg.dim, max(cfg.classes, 2)))
    if cfg.classes <= cfg.dim:
        # Orthonormal directions: all pairwise distances equal sqrt(2).
        q, _ = np.linalg.qr(raw[:, : cfg.classes])
        centroids = q.T * (cfg.separation / np.sqrt(2.0))
    else:
        # More classes than dimensions: scale random directions up until
        # the closest pair is separation apart.
        centroids = raw.T[: cfg.classes]
        dists = np.linalg.norm(centroids[:, None, :] - centroids[None, :, :], axis=2)
        closest = dists[np.triu_indices(cfg.classes, k=1)].min()
        if closest <= 0.0:
            raise ValueError("degenerate centroid draw; change the seed")
        centroids = centroids * (cfg.separation / closest)
    return centroids


def generate(cfg: SynthConfig) -> EmbeddingDataset:
    """Class-blocked dataset of centroid + unit-variance Gaussian samples."""
    rng = np.random.default_rng(cfg.seed)
    centroids = _centroids(cfg, rng)
    x = np.empty((cfg.classes * cfg.per_class, cfg.dim))
    for j in range(cfg.classes):
        noise = rng.standard_normal((cfg.per_class, cfg.dim))
        x[j * cfg.per_class : (j + 1) * cfg.per_class] = centroids[j] + noise
    labels = np.repeat(np.arange(cfg.classes), cfg.per_class)
    class_names = [f"class{j}" for j in range(cfg.classes)]
    return EmbeddingDataset(x=x, labels=labels, class_names=class_names)


def generate_label_fixtures(
    cfg: SynthConfig, height: int = 16, strip_width: int = 8
) -> tuple[dict[int, Heatmap], dict[int, SegmentationMask]]:
    """Per-image heatmap/mask pairs with one concept strip per class.

    The mask tiles the grid into ``classes`` vertical strips, strip j
    labelled ``concept<j>``; the heatmap of a class-j image is hot on strip
    j and near zero elsewhere, so IoU against the matching concept is ~1.
    """
    rng = np.random.default_rng(cfg.seed)
    width = strip_width * cfg.classes
    mask_grid = np.zeros((height, width), dtype=np.int64)
    for j in range(cfg.classes):
        mask_grid[:, j * strip_width : (j + 1) * strip_width] = j
    legend = {j: f"concept{j}" for j in range(cfg.classes)}

    heatmaps: dict[int, Heatmap] = {}
    masks: dict[int, SegmentationMask] = {}
    image_id = 0
    for j in range(cfg.classes):
        for _ in range(cfg.per_class):
            grid = rng.uniform(0.0, 0.05, size=(height, width))
            grid[:, j * strip_width : (j + 1) * strip_width] = rng.uniform(
                0.9, 1.0, size=(height, strip_width)
            )
            heatmaps[image_id] = Heatmap(grid=grid, image_id=image_id)
            masks[image_id] = SegmentationMask(
                grid=mask_grid.copy(), legend=dict(legend), image_id=image_id
            )
            image_id += 1
    return heatmaps, masks
