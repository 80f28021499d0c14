"""Semantic labelling of concept neurons via heatmap/mask overlap.

For a neuron, take the images that activate it most strongly, binarize
each image's attention heatmap at a fraction of its maximum, and score
every concept present in the segmentation masks by mean
intersection-over-union.  The winning concept names (all within a margin
of the best score, capped) become the neuron's predicate name, each with a
per-concept counter suffix so names stay globally unique.

Neurons can be labelled in parallel; counter suffixes are assigned in
neuron-index order so the final names are deterministic.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .core import ActivationBatch, FORMAT_VERSION, FormatError, fmt_real
from .rules import AB_NAME, Literal, Rule, RuleSet, validate_ruleset

HM_MAGIC = "nesyvit-hm"
MASK_MAGIC = "nesyvit-mask"

_NAME_OK = re.compile(r"[A-Za-z0-9_]+\Z")


@dataclass
class Heatmap:
    grid: np.ndarray
    image_id: int

    def __post_init__(self) -> None:
        self.grid = np.asarray(self.grid, dtype=np.float64)
        if self.grid.ndim != 2:
            raise ValueError(f"heatmap must be 2-D, got shape {self.grid.shape}")
        if self.grid.size and (self.grid.min() < 0.0 or self.grid.max() > 1.0):
            raise ValueError("heatmap values must lie in [0, 1]")


@dataclass
class SegmentationMask:
    grid: np.ndarray
    legend: dict[int, str]
    image_id: int

    def __post_init__(self) -> None:
        self.grid = np.asarray(self.grid, dtype=np.int64)
        if self.grid.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {self.grid.shape}")
        present = set(np.unique(self.grid).tolist())
        missing = present - set(self.legend)
        if missing:
            raise ValueError(f"mask ids missing from legend: {sorted(missing)}")


@dataclass
class ConceptScore:
    name: str
    score: float


def top_k_images(acts: ActivationBatch, neuron: int, k: int = 10) -> list[int]:
    """Indices of the k strongest activations of a neuron, ties to lower index."""
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    if not (0 <= neuron < acts.d):
        raise ValueError(f"neuron index {neuron} out of range for D={acts.d}")
    column = acts.z[:, neuron]
    order = np.argsort(-column, kind="stable")
    return [int(i) for i in order[:k]]


def _heat_region(hm: Heatmap, theta: float) -> np.ndarray:
    peak = float(hm.grid.max()) if hm.grid.size else 0.0
    if peak <= 0.0:
        # A flat-zero heatmap highlights nothing.
        return np.zeros_like(hm.grid, dtype=bool)
    return hm.grid >= theta * peak


def iou(hm: Heatmap, mask: SegmentationMask, concept: int, theta: float = 0.5) -> float:
    """IoU between the binarized heatmap region and a mask concept region."""
    if not (0.0 < theta <= 1.0):
        raise ValueError(f"theta must lie in (0, 1], got {theta}")
    if hm.grid.shape != mask.grid.shape:
        raise ValueError(
            f"dimension mismatch: heatmap {hm.grid.shape} vs mask {mask.grid.shape}"
        )
    region = _heat_region(hm, theta)
    concept_region = mask.grid == concept
    union = np.logical_or(region, concept_region).sum()
    if union == 0:
        return 0.0
    inter = np.logical_and(region, concept_region).sum()
    return float(inter) / float(union)


def concept_scores(
    neuron: int,
    acts: ActivationBatch,
    heatmaps: dict[int, Heatmap],
    masks: dict[int, SegmentationMask],
    k: int = 10,
    theta: float = 0.5,
) -> list[ConceptScore]:
    """Mean IoU per concept name over a neuron's top-k images, best first."""
    ids = top_k_images(acts, neuron, k)
    for image_id in ids:
        if image_id not in heatmaps or image_id not in masks:
            raise ValueError(f"no heatmap/mask for image {image_id}")
    names: list[str] = []
    seen: set[str] = set()
    for image_id in ids:
        for name in masks[image_id].legend.values():
            if name not in seen:
                seen.add(name)
                names.append(name)
    totals = {name: 0.0 for name in names}
    for image_id in ids:
        mask = masks[image_id]
        hm = heatmaps[image_id]
        by_name = {name: cid for cid, name in mask.legend.items()}
        for name in names:
            if name in by_name:
                totals[name] += iou(hm, mask, by_name[name], theta)
    scores = [ConceptScore(name=name, score=totals[name] / len(ids)) for name in names]
    scores.sort(key=lambda s: (-s.score, s.name))
    return scores


def label_neuron(
    neuron: int,
    acts: ActivationBatch,
    heatmaps: dict[int, Heatmap],
    masks: dict[int, SegmentationMask],
    k: int = 10,
    theta: float = 0.5,
    margin: float = 0.8,
    max_concepts: int = 4,
    counters: dict[str, int] | None = None,
) -> str:
    """Predicate name for a neuron from its best-overlapping concepts.

    Every concept within margin * (best mean IoU) contributes, in
    descending score order, up to max_concepts names; counters assign the
    per-concept occurrence suffix.  With no masks at all (or no positive
    overlap) the neuron keeps its raw ``n<index>`` name.
    """
    if counters is None:
        counters = {}
    if not masks:
        return f"n{neuron}"
    scores = concept_scores(neuron, acts, heatmaps, masks, k, theta)
    positive = [s for s in scores if s.score > 0.0]
    if not positive:
        return f"n{neuron}"
    best = positive[0].score
    chosen = [s.name for s in positive if s.score >= margin * best][:max_concepts]
    parts = []
    for name in chosen:
        counters[name] = counters.get(name, 0) + 1
        parts.append(f"{name}{counters[name]}")
    return "_".join(parts)


def label_neurons(
    acts: ActivationBatch,
    heatmaps: dict[int, Heatmap],
    masks: dict[int, SegmentationMask],
    neurons: list[int] | None = None,
    k: int = 10,
    theta: float = 0.5,
    margin: float = 0.8,
    max_concepts: int = 4,
) -> dict[int, str]:
    """Label a set of neurons (default: all), counters in index order."""
    if neurons is None:
        neurons = list(range(acts.d))
    counters: dict[str, int] = {}
    return {
        n: label_neuron(n, acts, heatmaps, masks, k, theta, margin, max_concepts, counters)
        for n in sorted(neurons)
    }


def rename_ruleset(rs: RuleSet, names: dict[int, str]) -> RuleSet:
    """Substitute predicate names by neuron index; structure is unchanged."""
    new_names = list(rs.neuron_names)
    for index, name in names.items():
        if not (0 <= index < len(new_names)):
            raise ValueError(f"neuron index {index} out of range")
        if not _NAME_OK.match(name):
            raise ValueError(f"invalid predicate name {name!r}")
        if AB_NAME.match(name):
            raise ValueError(f"predicate name {name!r} collides with the reserved ab pattern")
        new_names[index] = name
    if len(set(new_names)) != len(new_names):
        raise ValueError("renaming produced colliding predicate names")
    mapping = dict(zip(rs.neuron_names, new_names))

    def rename_rule(rule: Rule) -> Rule:
        return Rule(
            head=rule.head,
            body=[Literal(pred=mapping[l.pred], negated=l.negated) for l in rule.body],
            exceptions=list(rule.exceptions),
        )

    renamed = RuleSet(
        rules=[rename_rule(r) for r in rs.rules],
        ab_rules={ab: [rename_rule(r) for r in defs] for ab, defs in rs.ab_rules.items()},
        neuron_names=new_names,
        class_names=list(rs.class_names),
    )
    validate_ruleset(renamed)
    return renamed


# ---------------------------------------------------------------------------
# Raster and name-map files.
# ---------------------------------------------------------------------------

def save_heatmap(hm: Heatmap, path: str, header_comment: str | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        h, w = hm.grid.shape
        fh.write(f"{HM_MAGIC} {FORMAT_VERSION} {h} {w} {hm.image_id}\n")
        for row in hm.grid:
            fh.write(" ".join(fmt_real(v) for v in row) + "\n")


def load_heatmap(path: str) -> Heatmap:
    rows, header, image_id = _load_raster(path, HM_MAGIC, float)
    try:
        return Heatmap(grid=np.asarray(rows, dtype=np.float64), image_id=image_id)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None


def save_mask(mask: SegmentationMask, path: str, header_comment: str | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        h, w = mask.grid.shape
        fh.write(f"{MASK_MAGIC} {FORMAT_VERSION} {h} {w} {mask.image_id}\n")
        for row in mask.grid:
            fh.write(" ".join(str(int(v)) for v in row) + "\n")
        for cid in sorted(mask.legend):
            fh.write(f"{cid} {mask.legend[cid]}\n")


def load_mask(path: str) -> SegmentationMask:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [(i + 1, line.strip()) for i, line in enumerate(fh)]
    content = [(n, l) for n, l in lines if l and not l.startswith("#")]
    if not content:
        raise FormatError(f"{path}: missing header")
    lineno, header = content[0]
    parts = header.split()
    if len(parts) != 5 or parts[0] != MASK_MAGIC:
        raise FormatError(f"{path}:{lineno}: malformed header {header!r}")
    h, w, image_id = int(parts[2]), int(parts[3]), int(parts[4])
    if len(content) < 1 + h:
        raise FormatError(f"{path}: expected {h} grid rows")
    grid = np.empty((h, w), dtype=np.int64)
    for i in range(h):
        row_lineno, row = content[1 + i]
        tokens = row.split()
        if len(tokens) != w:
            raise FormatError(f"{path}:{row_lineno}: expected {w} entries, found {len(tokens)}")
        try:
            grid[i] = [int(t) for t in tokens]
        except ValueError:
            raise FormatError(f"{path}:{row_lineno}: non-integer mask entry") from None
    legend: dict[int, str] = {}
    for row_lineno, row in content[1 + h :]:
        tokens = row.split(maxsplit=1)
        if len(tokens) != 2:
            raise FormatError(f"{path}:{row_lineno}: malformed legend line {row!r}")
        try:
            legend[int(tokens[0])] = tokens[1]
        except ValueError:
            raise FormatError(f"{path}:{row_lineno}: non-integer legend id") from None
    try:
        return SegmentationMask(grid=grid, legend=legend, image_id=image_id)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None


def _load_raster(path: str, magic: str, convert):
    with open(path, "r", encoding="utf-8") as fh:
        lines = [(i + 1, line.strip()) for i, line in enumerate(fh)]
    content = [(n, l) for n, l in lines if l and not l.startswith("#")]
    if not content:
        raise FormatError(f"{path}: missing header")
    lineno, header = content[0]
    parts = header.split()
    if len(parts) != 5 or parts[0] != magic:
        raise FormatError(f"{path}:{lineno}: malformed header {header!r}")
    try:
        h, w, image_id = int(parts[2]), int(parts[3]), int(parts[4])
    except ValueError:
        raise FormatError(f"{path}:{lineno}: malformed header {header!r}") from None
    rows = content[1:]
    if len(rows) != h:
        raise FormatError(f"{path}: expected {h} rows, found {len(rows)}")
    grid = []
    for row_lineno, row in rows:
        tokens = row.split()
        if len(tokens) != w:
            raise FormatError(f"{path}:{row_lineno}: expected {w} entries, found {len(tokens)}")
        try:
            grid.append([convert(t) for t in tokens])
        except ValueError:
            raise FormatError(f"{path}:{row_lineno}: malformed entry") from None
    return grid, header, image_id


def save_name_map(names: dict[int, str], path: str, header_comment: str | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        for index in sorted(names):
            fh.write(f"{index} {names[index]}\n")


def load_name_map(path: str) -> dict[int, str]:
    names: dict[int, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            tokens = line.split(maxsplit=1)
            if len(tokens) != 2:
                raise FormatError(f"{path}:{lineno}: malformed name-map line {line!r}")
            try:
                names[int(tokens[0])] = tokens[1]
            except ValueError:
                raise FormatError(f"{path}:{lineno}: non-integer neuron index") from None
    return names
