import math

import numpy as np
import pytest

from nesyvit.core import ActivationBatch, EmbeddingDataset, SparseConceptLayer
from nesyvit.losses import (
    LossConfig,
    entropy_loss,
    grad_total,
    l1_loss,
    l2_normalize,
    numeric_gradient,
    supcon_loss,
    total_loss,
)

# Frozen expected value for the three-sample contrastive example, computed
# by scalar evaluation: anchors 1 and 2 each contribute log(1 + e^-1), the
# third anchor has no positives, and the mean is over all three.
HAND_SUPCON = 2.0 * math.log(1.0 + math.exp(-1.0)) / 3.0


def batch(z, labels):
    return ActivationBatch(z=np.asarray(z, dtype=float), labels=np.asarray(labels))


def hand_example_batch():
    return batch([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [0, 0, 1])


class TestNormalize:
    def test_three_four_five(self):
        assert np.allclose(l2_normalize([3.0, 4.0]), [0.6, 0.8])

    def test_unit_vector_unchanged(self):
        v = np.array([0.0, 1.0])
        assert np.array_equal(l2_normalize(v), v)

    def test_zero_vector_stays_zero(self):
        assert np.array_equal(l2_normalize([0.0, 0.0]), [0.0, 0.0])


class TestSupCon:
    def test_identical_pair_is_zero(self):
        for tau in (0.05, 0.5, 1.0):
            cfg = LossConfig(tau=tau)
            value = supcon_loss(batch([[0.3, 0.4], [0.3, 0.4]], [1, 1]), cfg)
            assert value == pytest.approx(0.0, abs=1e-12)

    def test_hand_example(self):
        value = supcon_loss(hand_example_batch(), LossConfig(tau=1.0))
        assert value == pytest.approx(HAND_SUPCON, abs=1e-9)
        assert value == pytest.approx(0.208841, abs=1e-6)

    def test_all_distinct_labels_zero(self):
        value = supcon_loss(batch([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], [0, 1, 2]), LossConfig())
        assert value == 0.0

    def test_batch_of_one_rejected(self):
        with pytest.raises(ValueError):
            supcon_loss(batch([[0.5]], [0]), LossConfig())

    def test_scale_invariance_per_sample(self):
        rng = np.random.default_rng(1)
        z = rng.uniform(0.1, 1.0, size=(5, 4))
        labels = np.array([0, 0, 1, 1, 1])
        cfg = LossConfig(tau=0.3)
        base = supcon_loss(batch(z, labels), cfg)
        scaled = z.copy()
        scaled[2] = np.clip(scaled[2] * 0.5, 0.0, 1.0)  # c in (0, 1] keeps range
        assert supcon_loss(batch(scaled, labels), cfg) == pytest.approx(base, abs=1e-12)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(2)
        z = rng.uniform(0.0, 1.0, size=(6, 3))
        labels = np.array([0, 1, 0, 2, 1, 0])
        cfg = LossConfig(tau=0.2)
        base = supcon_loss(batch(z, labels), cfg)
        perm = rng.permutation(6)
        assert supcon_loss(batch(z[perm], labels[perm]), cfg) == pytest.approx(base, abs=1e-12)

    def test_zero_row_excluded(self):
        # A zero activation row neither anchors nor appears in denominators.
        cfg = LossConfig(tau=1.0)
        with_zero = batch([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 0.0]], [0, 0, 1, 0])
        # Anchors 1,2 see the same candidates as in the 3-sample example but
        # the mean is now over 4 anchors.
        assert supcon_loss(with_zero, cfg) == pytest.approx(HAND_SUPCON * 3.0 / 4.0, abs=1e-9)


class TestEntropy:
    def test_all_half_is_ln2(self):
        cfg = LossConfig(epsilon=1e-7)
        value = entropy_loss(batch([[0.5, 0.5], [0.5, 0.5]], [0, 0]), cfg)
        assert value == pytest.approx(math.log(2.0), abs=1e-5)

    def test_binary_entries_near_zero(self):
        eps = 1e-7
        cfg = LossConfig(epsilon=eps)
        value = entropy_loss(batch([[0.0, 1.0], [1.0, 0.0]], [0, 0]), cfg)
        assert abs(value) <= 2.0 * eps

    def test_single_entry_point_nine(self):
        cfg = LossConfig(epsilon=1e-12)
        expected = -(0.9 * math.log(0.9) + 0.1 * math.log(0.1))
        value = entropy_loss(batch([[0.9]], [0]), cfg)
        assert value == pytest.approx(expected, abs=1e-9)
        assert value == pytest.approx(0.325083, abs=1e-6)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            batch([[1.1]], [0])

    def test_monotone_in_distance_from_half(self):
        cfg = LossConfig(epsilon=1e-9)
        values = [
            entropy_loss(batch([[z]], [0]), cfg) for z in (0.5, 0.6, 0.75, 0.9, 0.99, 1.0)
        ]
        assert all(a > b for a, b in zip(values, values[1:]))


class TestL1:
    def test_zeros(self):
        assert l1_loss(batch([[0.0, 0.0]], [0])) == 0.0

    def test_single_row_mean(self):
        assert l1_loss(batch([[0.2, 0.4]], [0])) == pytest.approx(0.3, abs=1e-15)

    def test_two_rows(self):
        assert l1_loss(batch([[1.0, 1.0], [0.5, 0.5]], [0, 0])) == 0.75

    def test_positive_homogeneity(self):
        rng = np.random.default_rng(3)
        z = rng.uniform(0.0, 1.0, size=(4, 5))
        for c in (0.0, 0.25, 0.5, 1.0):
            assert l1_loss(batch(c * z, np.zeros(4, dtype=int))) == pytest.approx(
                c * l1_loss(batch(z, np.zeros(4, dtype=int))), abs=1e-12
            )


class TestTotal:
    def test_zero_weights_zero_total(self):
        cfg = LossConfig(alpha=0.0, beta=0.0, gamma=0.0)
        breakdown = total_loss(hand_example_batch(), cfg)
        assert breakdown.total == 0.0

    def test_bits_with_distinct_labels_reduce_to_l1(self):
        cfg = LossConfig(alpha=0.0, beta=0.0, gamma=1.0, epsilon=1e-9)
        z = [[1.0, 0.0, 1.0], [0.0, 0.0, 1.0]]
        breakdown = total_loss(batch(z, [0, 1]), cfg)
        assert breakdown.total == pytest.approx(3.0 / 6.0, abs=1e-12)

    def test_supcon_only_matches_hand_example(self):
        cfg = LossConfig(alpha=1.0, beta=0.0, gamma=0.0, tau=1.0)
        breakdown = total_loss(hand_example_batch(), cfg)
        assert breakdown.total == pytest.approx(HAND_SUPCON, abs=1e-9)

    def test_breakdown_identity(self):
        rng = np.random.default_rng(11)
        cfg = LossConfig(alpha=1.7, beta=0.4, gamma=2.2, tau=0.3)
        b = total_loss(batch(rng.uniform(size=(5, 4)), rng.integers(0, 2, size=5)), cfg)
        combined = cfg.alpha * b.supcon + cfg.beta * b.entropy + cfg.gamma * b.sparsity
        assert b.total == pytest.approx(combined, abs=1e-12)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            LossConfig(tau=0.0)
        with pytest.raises(ValueError):
            LossConfig(epsilon=0.0)
        with pytest.raises(ValueError):
            LossConfig(alpha=-1.0)


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-6)
    return float((np.abs(a - b) / scale).max())


class TestGradients:
    def test_zero_weights_zero_gradient(self):
        cfg = LossConfig(alpha=0.0, beta=0.0, gamma=0.0)
        layer = SparseConceptLayer(w=np.ones((2, 3)), b=np.ones(2))
        data = EmbeddingDataset(
            x=np.random.default_rng(0).normal(size=(4, 3)),
            labels=np.array([0, 0, 1, 1]),
            class_names=["a", "b"],
        )
        dw, db = grad_total(layer, data, cfg)
        assert np.all(dw == 0.0) and np.all(db == 0.0)

    def test_scalar_l1_chain_rule(self):
        # d/dW sigmoid(Wx+b) at W=0,b=0,x=1 is z(1-z)x = 0.25.
        cfg = LossConfig(alpha=0.0, beta=0.0, gamma=1.0)
        layer = SparseConceptLayer(w=[[0.0]], b=[0.0])
        data = EmbeddingDataset(x=[[1.0]], labels=[0], class_names=["a"])
        dw, db = grad_total(layer, data, cfg)
        assert dw[0, 0] == pytest.approx(0.25, abs=1e-12)
        assert db[0] == pytest.approx(0.25, abs=1e-12)

    def test_matches_finite_differences(self):
        cfg = LossConfig(alpha=2.0, beta=1.0, gamma=1.0, tau=0.1, epsilon=1e-7)
        for seed in range(5):
            rng = np.random.default_rng(seed)
            layer = SparseConceptLayer(
                w=rng.normal(scale=0.5, size=(8, 5)), b=rng.normal(scale=0.1, size=8)
            )
            data = EmbeddingDataset(
                x=rng.normal(size=(6, 5)),
                labels=rng.integers(0, 3, size=6),
                class_names=["a", "b", "c"],
            )
            analytic = grad_total(layer, data, cfg)
            numeric = numeric_gradient(layer, data, cfg, h=1e-5)
            assert relative_error(analytic[0], numeric[0]) <= 1e-4
            assert relative_error(analytic[1], numeric[1]) <= 1e-4

    def test_numeric_gradient_deterministic(self):
        cfg = LossConfig()
        rng = np.random.default_rng(5)
        layer = SparseConceptLayer(w=rng.normal(size=(3, 2)), b=rng.normal(size=3))
        data = EmbeddingDataset(
            x=rng.normal(size=(4, 2)), labels=np.array([0, 0, 1, 1]), class_names=["a", "b"]
        )
        first = numeric_gradient(layer, data, cfg, h=1e-5)
        second = numeric_gradient(layer, data, cfg, h=1e-5)
        assert np.array_equal(first[0], second[0]) and np.array_equal(first[1], second[1])

    def test_numeric_gradient_rejects_bad_step(self):
        layer = SparseConceptLayer(w=[[0.0]], b=[0.0])
        data = EmbeddingDataset(x=[[1.0]], labels=[0], class_names=["a"])
        with pytest.raises(ValueError):
            numeric_gradient(layer, data, LossConfig(alpha=0.0), h=0.0)

    def test_alpha_requires_pairs(self):
        cfg = LossConfig(alpha=1.0)
        layer = SparseConceptLayer(w=[[0.0]], b=[0.0])
        data = EmbeddingDataset(x=[[1.0]], labels=[0], class_names=["a"])
        with pytest.raises(ValueError):
            grad_total(layer, data, cfg)
