"""Sparse concept layers, rule extraction, and rule-based classification."""

from .core import (
    ActivationBatch,
    BinaryConceptTable,
    EmbeddingDataset,
    FormatError,
    SparseConceptLayer,
    binarize,
    forward,
    init_layer,
    load_embeddings,
    load_layer,
    load_table,
    save_embeddings,
    save_layer,
    save_table,
)
from .foldsem import FoldParams, best_literal, learn, learn_rule
from .labeller import (
    ConceptScore,
    Heatmap,
    SegmentationMask,
    iou,
    label_neuron,
    label_neurons,
    load_heatmap,
    load_mask,
    rename_ruleset,
    save_heatmap,
    save_mask,
    top_k_images,
)
from .losses import (
    LossBreakdown,
    LossConfig,
    entropy_loss,
    grad_total,
    l1_loss,
    l2_normalize,
    numeric_gradient,
    supcon_loss,
    total_loss,
)
from .rules import Literal, Rule, RuleSet, RuleSyntaxError, load_rules, parse, save_rules, serialize
from .runtime import Justification, Prediction, RuleSetStats, classify, evaluate, justify, stats
from .synthdata import SynthConfig, generate, generate_label_fixtures
from .train import TrainConfig, TrainHistory, TrainingDiverged, make_batches, train

__version__ = "0.1.0"
