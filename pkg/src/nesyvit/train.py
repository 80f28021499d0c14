"""Deterministic gradient-descent training of the sparse concept layer.

AdamW updates with decoupled weight decay, class-balanced mini-batches (so
the contrastive term always has positives to work with), and either
plateau learning-rate decay (default) or cosine annealing.  Given the same
config and data, two runs produce bit-identical layers.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .core import EmbeddingDataset, SparseConceptLayer, init_layer
from .losses import LossBreakdown, LossConfig, loss_and_grad

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class TrainingDiverged(RuntimeError):
    """Training hit a non-finite loss."""


@dataclass
class TrainConfig:
    learning_rate: float = 5e-6
    weight_decay: float = 5e-3
    batch_size: int = 32
    epochs: int = 50
    plateau_patience: int = 10
    lr_decay_factor: float = 0.5
    seed: int = 0
    concept_dim: int = 128
    scheduler: str = "plateau"  # or "cosine"
    loss: LossConfig = field(default_factory=LossConfig)

    def __post_init__(self) -> None:
        if self.learning_rate <= 0.0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if not (0.0 < self.lr_decay_factor < 1.0):
            raise ValueError(f"lr_decay_factor must lie in (0, 1), got {self.lr_decay_factor}")
        if self.batch_size < 2:
            raise ValueError(f"batch_size must be at least 2, got {self.batch_size}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be at least 1, got {self.epochs}")
        if self.plateau_patience < 1:
            raise ValueError("plateau_patience must be at least 1")
        if self.concept_dim < 1:
            raise ValueError("concept_dim must be at least 1")
        if self.scheduler not in ("plateau", "cosine"):
            raise ValueError(f"unknown scheduler {self.scheduler!r}")


@dataclass
class EpochRecord:
    breakdown: LossBreakdown
    lr: float
    seconds: float


@dataclass
class TrainHistory:
    epochs: list[EpochRecord] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ["epoch,supcon,entropy,sparsity,total,lr"]
        for i, rec in enumerate(self.epochs):
            b = rec.breakdown
            lines.append(
                f"{i},{b.supcon:.9g},{b.entropy:.9g},{b.sparsity:.9g},{b.total:.9g},{rec.lr:.9g}"
            )
        return "\n".join(lines) + "\n"

    def save_csv(self, path: str, header_comment: str | None = None) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            fh.write(self.to_csv())


def make_batches(data: EmbeddingDataset, cfg: TrainConfig, epoch: int) -> list[np.ndarray]:
    """Seeded per-epoch batching that seeds each batch with a same-class pair.

    Same-class pairs are formed first and one is planted per batch while
    they last, so the contrastive loss has positives wherever the data
    allows it.  A trailing singleton batch is merged into its predecessor
    (one batch may exceed batch_size by one) so every batch has >= 2
    samples.  Deterministic in (cfg.seed, epoch).
    """
    if data.n < 2:
        raise ValueError("need at least 2 samples to form batches")
    rng = np.random.default_rng([cfg.seed, epoch])
    pairs: list[list[int]] = []
    singles: list[int] = []
    for c in range(len(data.class_names)):
        idx = np.flatnonzero(data.labels == c)
        idx = idx[rng.permutation(len(idx))]
        for i in range(0, len(idx) - 1, 2):
            pairs.append([int(idx[i]), int(idx[i + 1])])
        if len(idx) % 2:
            singles.append(int(idx[-1]))
    pairs = [pairs[i] for i in rng.permutation(len(pairs))]
    singles = [singles[i] for i in rng.permutation(len(singles))]

    n_batches = math.ceil(data.n / cfg.batch_size)
    batches: list[list[int]] = [[] for _ in range(n_batches)]
    seed_pairs, rest = pairs[:n_batches], pairs[n_batches:]
    for b, pair in enumerate(seed_pairs):
        batches[b].extend(pair)
    queue = [i for pair in rest for i in pair] + singles
    pos = 0
    for batch in batches:
        while len(batch) < cfg.batch_size and pos < len(queue):
            batch.append(queue[pos])
            pos += 1
    if len(batches) > 1 and len(batches[-1]) < 2:
        tail = batches.pop()
        batches[-1].extend(tail)
    return [np.asarray(b, dtype=np.int64) for b in batches if b]


def train(data: EmbeddingDataset, cfg: TrainConfig) -> tuple[SparseConceptLayer, TrainHistory]:
    """Run the full training loop; returns the layer and per-epoch history."""
    if data.n < 2:
        raise ValueError("need at least 2 samples to train")
    layer = init_layer(cfg.concept_dim, data.e, seed=cfg.seed)
    w, b = layer.w, layer.b
    m_w = np.zeros_like(w)
    v_w = np.zeros_like(w)
    m_b = np.zeros_like(b)
    v_b = np.zeros_like(b)
    step = 0

    lr = cfg.learning_rate
    best_total = math.inf
    stalled = 0
    history = TrainHistory()

    for epoch in range(cfg.epochs):
        started = time.perf_counter()
        if cfg.scheduler == "cosine":
            lr = cfg.learning_rate * 0.5 * (1.0 + math.cos(math.pi * epoch / cfg.epochs))
        sums = np.zeros(4)  # supcon, entropy, sparsity, total, sample-weighted
        count = 0
        for batch_index, idx in enumerate(make_batches(data, cfg, epoch)):
            sub = EmbeddingDataset(
                x=data.x[idx], labels=data.labels[idx], class_names=data.class_names
            )
            layer = SparseConceptLayer(w=w, b=b)
            breakdown, dw, db = loss_and_grad(layer, sub, cfg.loss)
            if not math.isfinite(breakdown.total):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch {batch_index}"
                )
            step += 1
            bias_fix1 = 1.0 - ADAM_BETA1**step
            bias_fix2 = 1.0 - ADAM_BETA2**step
            for param, grad, m, v in ((w, dw, m_w, v_w), (b, db, m_b, v_b)):
                m *= ADAM_BETA1
                m += (1.0 - ADAM_BETA1) * grad
                v *= ADAM_BETA2
                v += (1.0 - ADAM_BETA2) * grad * grad
                update = (m / bias_fix1) / (np.sqrt(v / bias_fix2) + ADAM_EPS)
                param -= lr * (update + cfg.weight_decay * param)
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise TrainingDiverged(
                    f"non-finite parameters after epoch {epoch}, batch {batch_index}"
                )
            weight = len(idx)
            sums += weight * np.array(
                [breakdown.supcon, breakdown.entropy, breakdown.sparsity, breakdown.total]
            )
            count += weight
        means = sums / count
        history.epochs.append(
            EpochRecord(
                breakdown=LossBreakdown(
                    supcon=means[0], entropy=means[1], sparsity=means[2], total=means[3]
                ),
                lr=lr,
                seconds=time.perf_counter() - started,
            )
        )
        if cfg.scheduler == "plateau":
            if means[3] < best_total:
                best_total = means[3]
                stalled = 0
            else:
                stalled += 1
                if stalled >= cfg.plateau_patience:
                    lr *= cfg.lr_decay_factor
                    stalled = 0
    return SparseConceptLayer(w=w, b=b), history
