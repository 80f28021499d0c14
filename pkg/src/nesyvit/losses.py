"""Training losses for the sparse concept layer and their exact gradients.

Three terms: a supervised contrastive term that clusters same-class
activation vectors, a binary-entropy term that pushes activations toward
0/1, and an L1 term that keeps them sparse.  ``total_loss`` combines them
with configurable weights; ``grad_total`` backpropagates the combination
through the sigmoid layer analytically, and ``numeric_gradient`` is the
central-difference oracle used to validate it.

All functions are pure and reduce over batch entries in a fixed order, so
repeated calls are bit-stable.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ActivationBatch, EmbeddingDataset, SparseConceptLayer, sigmoid

# Rows with Euclidean norm at or below this are treated as degenerate: they
# stay zero under normalization and take no part in contrastive similarity.
NORM_EPS = 1e-12


@dataclass
class LossConfig:
    """Loss weights and constants.

    alpha, beta, gamma weight the contrastive, entropy, and sparsity terms;
    tau is the contrastive temperature, epsilon the entropy log stabilizer.
    """

    alpha: float = 2.0
    beta: float = 1.0
    gamma: float = 1.0
    tau: float = 0.1
    epsilon: float = 1e-7

    def __post_init__(self) -> None:
        if self.tau <= 0.0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.epsilon <= 0.0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if min(self.alpha, self.beta, self.gamma) < 0.0:
            raise ValueError("loss weights must be nonnegative")


@dataclass
class LossBreakdown:
    supcon: float
    entropy: float
    sparsity: float
    total: float


def l2_normalize(v: np.ndarray) -> np.ndarray:
    """Scale a vector to unit Euclidean norm; zero vectors stay zero."""
    v = np.asarray(v, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if norm <= NORM_EPS:
        return np.zeros_like(v)
    return v / norm


def _unit_rows(z: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Row-normalize, returning (units, norms, validity mask)."""
    norms = np.linalg.norm(z, axis=1)
    valid = norms > NORM_EPS
    units = np.zeros_like(z)
    if valid.any():
        units[valid] = z[valid] / norms[valid, None]
    return units, norms, valid


def _supcon(
    z: np.ndarray, labels: np.ndarray, tau: float, want_grad: bool
) -> tuple[float, np.ndarray | None]:
    """Contrastive loss over L2-normalized rows; optionally its dL/dz.

    Anchors whose positive set is empty contribute 0.  Degenerate
    (zero-norm) rows are excluded from every anchor's candidate set.
    """
    n = z.shape[0]
    units, norms, valid = _unit_rows(z)
    sims = units @ units.T / tau

    # cand[i, j]: j is a contrast candidate for anchor i.
    cand = np.logical_and(valid[None, :], valid[:, None])
    np.fill_diagonal(cand, False)
    pos = np.logical_and(cand, labels[None, :] == labels[:, None])
    pos_counts = pos.sum(axis=1)
    anchors = pos_counts > 0

    loss = 0.0
    grad_sims = np.zeros((n, n)) if want_grad else None
    for i in np.flatnonzero(anchors):
        row_cand = cand[i]
        s = sims[i, row_cand]
        m = s.max()
        exp_s = np.exp(s - m)
        lse = m + np.log(exp_s.sum())
        p_idx = pos[i]
        loss += -float(np.sum(sims[i, p_idx] - lse)) / int(pos_counts[i])
        if want_grad:
            softmax = exp_s / exp_s.sum()
            grad_sims[i, row_cand] += softmax / n
            grad_sims[i, p_idx] -= 1.0 / (pos_counts[i] * n)
    loss /= n

    if not want_grad:
        return loss, None
    # d(loss)/d(units), accounting for each pair appearing as (i,j) and (j,i).
    grad_units = (grad_sims + grad_sims.T) @ units / tau
    grad_z = np.zeros_like(z)
    for i in np.flatnonzero(valid):
        g = grad_units[i]
        u = units[i]
        grad_z[i] = (g - np.dot(g, u) * u) / norms[i]
    return loss, grad_z


def _entropy(z: np.ndarray, eps: float, want_grad: bool) -> tuple[float, np.ndarray | None]:
    count = z.size
    log_p = np.log(z + eps)
    log_q = np.log(1.0 - z + eps)
    loss = -float(np.sum(z * log_p + (1.0 - z) * log_q)) / count
    if not want_grad:
        return loss, None
    grad = -(log_p + z / (z + eps) - log_q - (1.0 - z) / (1.0 - z + eps)) / count
    return loss, grad


def _l1(z: np.ndarray, want_grad: bool) -> tuple[float, np.ndarray | None]:
    loss = float(np.sum(np.abs(z))) / z.size
    if not want_grad:
        return loss, None
    # Sign convention: subgradient 0 at exactly 0 (inert for sigmoid outputs).
    return loss, np.sign(z) / z.size


def supcon_loss(acts: ActivationBatch, cfg: LossConfig) -> float:
    """Average contrastive loss over all anchors in the batch."""
    if acts.n < 2:
        raise ValueError(f"contrastive loss needs a batch of at least 2, got {acts.n}")
    value, _ = _supcon(acts.z, acts.labels, cfg.tau, want_grad=False)
    return value


def entropy_loss(acts: ActivationBatch, cfg: LossConfig) -> float:
    """Mean elementwise binary entropy of the activations (natural log)."""
    value, _ = _entropy(acts.z, cfg.epsilon, want_grad=False)
    return value


def l1_loss(acts: ActivationBatch) -> float:
    """Mean absolute activation over all N*D entries."""
    value, _ = _l1(acts.z, want_grad=False)
    return value


def _combined(
    z: np.ndarray, labels: np.ndarray, cfg: LossConfig, want_grad: bool
) -> tuple[LossBreakdown, np.ndarray | None]:
    grad = np.zeros_like(z) if want_grad else None
    if z.shape[0] >= 2:
        supcon, g = _supcon(z, labels, cfg.tau, want_grad and cfg.alpha != 0.0)
        if want_grad and cfg.alpha != 0.0:
            grad += cfg.alpha * g
    elif cfg.alpha != 0.0:
        raise ValueError("contrastive weight is nonzero but the batch has fewer than 2 samples")
    else:
        supcon = 0.0
    entropy, g = _entropy(z, cfg.epsilon, want_grad)
    if want_grad:
        grad += cfg.beta * g
    sparsity, g = _l1(z, want_grad)
    if want_grad:
        grad += cfg.gamma * g
    total = cfg.alpha * supcon + cfg.beta * entropy + cfg.gamma * sparsity
    return (
        LossBreakdown(
            supcon=float(supcon), entropy=float(entropy), sparsity=float(sparsity), total=float(total)
        ),
        grad,
    )


def total_loss(acts: ActivationBatch, cfg: LossConfig) -> LossBreakdown:
    """Weighted sum of the three loss terms, with the per-term values."""
    breakdown, _ = _combined(acts.z, acts.labels, cfg, want_grad=False)
    return breakdown


def loss_and_grad(
    layer: SparseConceptLayer, batch: EmbeddingDataset, cfg: LossConfig
) -> tuple[LossBreakdown, np.ndarray, np.ndarray]:
    """Loss breakdown plus its exact (dW, db) gradient in one pass."""
    if layer.e != batch.e:
        raise ValueError(
            f"dimension mismatch: layer expects E={layer.e}, dataset has E={batch.e}"
        )
    z = sigmoid(batch.x @ layer.w.T + layer.b)
    breakdown, grad_z = _combined(z, batch.labels, cfg, want_grad=True)
    grad_pre = grad_z * z * (1.0 - z)
    dw = grad_pre.T @ batch.x
    db = grad_pre.sum(axis=0)
    return breakdown, dw, db


def grad_total(
    layer: SparseConceptLayer, batch: EmbeddingDataset, cfg: LossConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Exact gradient of ``total_loss(forward(layer, batch), cfg)``."""
    _, dw, db = loss_and_grad(layer, batch, cfg)
    return dw, db


def numeric_gradient(
    layer: SparseConceptLayer,
    batch: EmbeddingDataset,
    cfg: LossConfig,
    h: float = 1e-5,
) -> tuple[np.ndarray, np.ndarray]:
    """Central finite differences of the total loss per parameter."""
    if h <= 0.0:
        raise ValueError(f"step size must be positive, got {h}")

    def value(w: np.ndarray, b: np.ndarray) -> float:
        z = sigmoid(batch.x @ w.T + b)
        breakdown, _ = _combined(z, batch.labels, cfg, want_grad=False)
        return breakdown.total

    dw = np.zeros_like(layer.w)
    db = np.zeros_like(layer.b)
    w = layer.w.copy()
    b = layer.b.copy()
    for idx in np.ndindex(w.shape):
        orig = w[idx]
        w[idx] = orig + h
        up = value(w, b)
        w[idx] = orig - h
        down = value(w, b)
        w[idx] = orig
        dw[idx] = (up - down) / (2.0 * h)
    for i in range(b.shape[0]):
        orig = b[i]
        b[i] = orig + h
        up = value(w, b)
        b[i] = orig - h
        down = value(w, b)
        b[i] = orig
        db[i] = (up - down) / (2.0 * h)
    return dw, db
