"""Core data types, the sparse concept layer, binarization, and file I/O.

All types are value objects: construct them fully and treat them as
read-only afterwards.  Every numeric routine here is deterministic, so
results are reproducible across runs and safe to share between threads.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

FORMAT_VERSION = 1

EMB_MAGIC = "nesyvit-emb"
LAYER_MAGIC = "nesyvit-layer"


class FormatError(ValueError):
    """A data file does not conform to its declared format."""


def fmt_real(x: float) -> str:
    """Serialize a float as its shortest exact decimal representation.

    ``repr`` round-trips float64 bit-for-bit, which is what the file
    format contracts need; fixed significant-digit formatting does not.
    """
    return repr(float(x))


def _parse_real(token: str, path: str, lineno: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise FormatError(f"{path}:{lineno}: non-numeric field {token!r}") from None
    if not math.isfinite(value):
        raise FormatError(f"{path}:{lineno}: non-finite value {token!r}")
    return value


@dataclass
class EmbeddingDataset:
    """N embedding vectors of dimension E with integer class labels.

    ``labels[i]`` indexes ``class_names``; vectors live in the rows of ``x``.
    """

    x: np.ndarray
    labels: np.ndarray
    class_names: list[str]

    def __post_init__(self) -> None:
        self.x = np.asarray(self.x, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.x.ndim != 2:
            raise ValueError(f"embedding matrix must be 2-D, got shape {self.x.shape}")
        n, e = self.x.shape
        if n < 1 or e < 1:
            raise ValueError(f"need at least one sample and one dimension, got {n}x{e}")
        if self.labels.shape != (n,):
            raise ValueError(f"expected {n} labels, got shape {self.labels.shape}")
        if not self.class_names:
            raise ValueError("class_names must be nonempty")
        if self.labels.min() < 0 or self.labels.max() >= len(self.class_names):
            raise ValueError("label out of range of class_names")
        if not np.isfinite(self.x).all():
            raise ValueError("embedding vectors must be finite")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def e(self) -> int:
        return self.x.shape[1]


@dataclass
class SparseConceptLayer:
    """Single linear layer (weights D x E, bias D) feeding a sigmoid."""

    w: np.ndarray
    b: np.ndarray

    def __post_init__(self) -> None:
        self.w = np.asarray(self.w, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.w.ndim != 2:
            raise ValueError(f"weight matrix must be 2-D, got shape {self.w.shape}")
        d, e = self.w.shape
        if d < 1 or e < 1:
            raise ValueError(f"need D >= 1 and E >= 1, got {d}x{e}")
        if self.b.shape != (d,):
            raise ValueError(f"bias must have shape ({d},), got {self.b.shape}")
        if not (np.isfinite(self.w).all() and np.isfinite(self.b).all()):
            raise ValueError("layer parameters must be finite")

    @property
    def d(self) -> int:
        return self.w.shape[0]

    @property
    def e(self) -> int:
        return self.w.shape[1]


@dataclass
class ActivationBatch:
    """Sigmoid outputs (N x D, entries in [0, 1]) with their class labels."""

    z: np.ndarray
    labels: np.ndarray
    class_names: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.z = np.asarray(self.z, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.z.ndim != 2:
            raise ValueError(f"activation matrix must be 2-D, got shape {self.z.shape}")
        if self.labels.shape != (self.z.shape[0],):
            raise ValueError("one label per activation row required")
        if self.z.size and (self.z.min() < 0.0 or self.z.max() > 1.0):
            raise ValueError("activations must lie in [0, 1]")
        if not self.class_names and self.labels.size:
            self.class_names = [f"c{i}" for i in range(int(self.labels.max()) + 1)]

    @property
    def n(self) -> int:
        return self.z.shape[0]

    @property
    def d(self) -> int:
        return self.z.shape[1]


def default_neuron_names(d: int) -> list[str]:
    return [f"n{j}" for j in range(d)]


@dataclass
class BinaryConceptTable:
    """N x D table of bits with labels; the rule learner's input."""

    bits: np.ndarray
    labels: np.ndarray
    neuron_names: list[str]
    class_names: list[str]

    def __post_init__(self) -> None:
        self.bits = np.asarray(self.bits, dtype=np.uint8)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.bits.ndim != 2:
            raise ValueError(f"bit table must be 2-D, got shape {self.bits.shape}")
        if self.bits.size and self.bits.max() > 1:
            raise ValueError("table entries must be 0 or 1")
        if len(self.neuron_names) != self.bits.shape[1]:
            raise ValueError(
                f"{self.bits.shape[1]} columns but {len(self.neuron_names)} neuron names"
            )
        if self.labels.shape != (self.bits.shape[0],):
            raise ValueError("one label per row required")
        if self.labels.size and (
            self.labels.min() < 0 or self.labels.max() >= len(self.class_names)
        ):
            raise ValueError("label out of range of class_names")

    @property
    def n(self) -> int:
        return self.bits.shape[0]

    @property
    def d(self) -> int:
        return self.bits.shape[1]


def sigmoid(t: np.ndarray) -> np.ndarray:
    """Numerically stable elementwise logistic function."""
    out = np.empty_like(t, dtype=np.float64)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    et = np.exp(t[~pos])
    out[~pos] = et / (1.0 + et)
    return out


def init_layer(d: int, e: int, seed: int = 0) -> SparseConceptLayer:
    """Seeded layer initialization: weights uniform in +-1/sqrt(E), bias 0.

    Fan-in scaling keeps initial pre-activations near zero, i.e. sigmoid
    outputs near 0.5, where gradients are largest.
    """
    if d < 1 or e < 1:
        raise ValueError("need D >= 1 and E >= 1")
    rng = np.random.default_rng(seed)
    bound = 1.0 / math.sqrt(e)
    w = rng.uniform(-bound, bound, size=(d, e))
    return SparseConceptLayer(w=w, b=np.zeros(d))


def forward(layer: SparseConceptLayer, data: EmbeddingDataset) -> ActivationBatch:
    """Apply the concept layer and elementwise sigmoid to every sample."""
    if layer.e != data.e:
        raise ValueError(
            f"dimension mismatch: layer expects E={layer.e}, dataset has E={data.e}"
        )
    z = sigmoid(data.x @ layer.w.T + layer.b)
    return ActivationBatch(z=z, labels=data.labels.copy(), class_names=list(data.class_names))


def binarize(acts: ActivationBatch, threshold: float = 0.5) -> BinaryConceptTable:
    """Threshold activations to bits; values at the threshold map to 1."""
    if not (0.0 < threshold < 1.0):
        raise ValueError(f"threshold must lie strictly inside (0, 1), got {threshold}")
    bits = (acts.z >= threshold).astype(np.uint8)
    return BinaryConceptTable(
        bits=bits,
        labels=acts.labels.copy(),
        neuron_names=default_neuron_names(acts.d),
        class_names=list(acts.class_names),
    )


# ---------------------------------------------------------------------------
# File formats.
#
# Embedding file:  "nesyvit-emb 1 <N> <E>" header, then one "<label>,<v1>,..."
# line per sample.  Layer file: "nesyvit-layer 1 <D> <E>", D weight rows, one
# bias row.  Binary table: CSV with header "label,<name_0>,...".  Lines whose
# first non-blank character is '#' are comments everywhere; savers emit a
# "# classes: a,b,c" directive so class inventories survive round trips.
# ---------------------------------------------------------------------------

_CLASS_DIRECTIVE = "# classes:"


def _read_lines(path: str) -> list[tuple[int, str]]:
    """Return (lineno, text) for every line, comments and blanks included."""
    with open(path, "r", encoding="utf-8") as fh:
        return [(i + 1, line.rstrip("\n")) for i, line in enumerate(fh)]


def _split_content(
    lines: list[tuple[int, str]],
) -> tuple[list[tuple[int, str]], list[str] | None]:
    """Split raw lines into content lines and an optional class directive."""
    content: list[tuple[int, str]] = []
    declared: list[str] | None = None
    for lineno, line in lines:
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            if stripped.startswith(_CLASS_DIRECTIVE):
                declared = [
                    name.strip()
                    for name in stripped[len(_CLASS_DIRECTIVE):].split(",")
                    if name.strip()
                ]
            continue
        content.append((lineno, stripped))
    return content, declared


def _resolve_labels(
    raw: list[tuple[int, str]], declared: list[str] | None, path: str
) -> tuple[np.ndarray, list[str]]:
    """Map textual labels to ids, honoring a declared class inventory."""
    if declared is not None:
        index = {name: i for i, name in enumerate(declared)}
        ids = []
        for lineno, name in raw:
            if name not in index:
                raise FormatError(f"{path}:{lineno}: unknown label {name!r}")
            ids.append(index[name])
        return np.asarray(ids, dtype=np.int64), list(declared)
    names: list[str] = []
    index = {}
    ids = []
    for _, name in raw:
        if name not in index:
            index[name] = len(names)
            names.append(name)
        ids.append(index[name])
    return np.asarray(ids, dtype=np.int64), names


def save_embeddings(data: EmbeddingDataset, path: str, header_comment: str | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        fh.write(f"{_CLASS_DIRECTIVE} {','.join(data.class_names)}\n")
        fh.write(f"{EMB_MAGIC} {FORMAT_VERSION} {data.n} {data.e}\n")
        for i in range(data.n):
            values = ",".join(fmt_real(v) for v in data.x[i])
            fh.write(f"{data.class_names[data.labels[i]]},{values}\n")


def load_embeddings(path: str) -> EmbeddingDataset:
    content, declared = _split_content(_read_lines(path))
    if not content:
        raise FormatError(f"{path}: missing header")
    lineno, header = content[0]
    parts = header.split()
    if len(parts) != 4 or parts[0] != EMB_MAGIC:
        raise FormatError(f"{path}:{lineno}: malformed header {header!r}")
    try:
        version, n, e = int(parts[1]), int(parts[2]), int(parts[3])
    except ValueError:
        raise FormatError(f"{path}:{lineno}: malformed header {header!r}") from None
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}:{lineno}: unsupported version {version}")
    rows = content[1:]
    if len(rows) != n:
        raise FormatError(f"{path}: header declares {n} rows, found {len(rows)}")
    x = np.empty((n, e), dtype=np.float64)
    raw_labels: list[tuple[int, str]] = []
    for i, (row_lineno, row) in enumerate(rows):
        fields = row.split(",")
        if len(fields) != e + 1:
            raise FormatError(
                f"{path}:{row_lineno}: expected {e} values, found {len(fields) - 1}"
            )
        raw_labels.append((row_lineno, fields[0]))
        for j, token in enumerate(fields[1:]):
            x[i, j] = _parse_real(token, path, row_lineno)
    labels, class_names = _resolve_labels(raw_labels, declared, path)
    return EmbeddingDataset(x=x, labels=labels, class_names=class_names)


def save_table(table: BinaryConceptTable, path: str, header_comment: str | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        fh.write(f"{_CLASS_DIRECTIVE} {','.join(table.class_names)}\n")
        fh.write("label," + ",".join(table.neuron_names) + "\n")
        for i in range(table.n):
            bits = ",".join(str(int(v)) for v in table.bits[i])
            fh.write(f"{table.class_names[table.labels[i]]},{bits}\n")


def load_table(path: str) -> BinaryConceptTable:
    content, declared = _split_content(_read_lines(path))
    if not content:
        raise FormatError(f"{path}: missing header")
    lineno, header = content[0]
    columns = header.split(",")
    if not columns or columns[0] != "label":
        raise FormatError(f"{path}:{lineno}: malformed header {header!r}")
    neuron_names = columns[1:]
    if not neuron_names:
        raise FormatError(f"{path}:{lineno}: table declares no neuron columns")
    d = len(neuron_names)
    rows = content[1:]
    if not rows:
        raise FormatError(f"{path}: table has no rows")
    bits = np.empty((len(rows), d), dtype=np.uint8)
    raw_labels: list[tuple[int, str]] = []
    for i, (row_lineno, row) in enumerate(rows):
        fields = row.split(",")
        if len(fields) != d + 1:
            raise FormatError(
                f"{path}:{row_lineno}: expected {d} bits, found {len(fields) - 1}"
            )
        raw_labels.append((row_lineno, fields[0]))
        for j, token in enumerate(fields[1:]):
            if token not in ("0", "1"):
                raise FormatError(f"{path}:{row_lineno}: non-binary entry {token!r}")
            bits[i, j] = int(token)
    labels, class_names = _resolve_labels(raw_labels, declared, path)
    return BinaryConceptTable(
        bits=bits, labels=labels, neuron_names=neuron_names, class_names=class_names
    )


def save_layer(layer: SparseConceptLayer, path: str, header_comment: str | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        fh.write(f"{LAYER_MAGIC} {FORMAT_VERSION} {layer.d} {layer.e}\n")
        for row in layer.w:
            fh.write(" ".join(fmt_real(v) for v in row) + "\n")
        fh.write(" ".join(fmt_real(v) for v in layer.b) + "\n")


def load_layer(path: str) -> SparseConceptLayer:
    content, _ = _split_content(_read_lines(path))
    if not content:
        raise FormatError(f"{path}: missing header")
    lineno, header = content[0]
    parts = header.split()
    if len(parts) != 4 or parts[0] != LAYER_MAGIC:
        raise FormatError(f"{path}:{lineno}: malformed header {header!r}")
    try:
        version, d, e = int(parts[1]), int(parts[2]), int(parts[3])
    except ValueError:
        raise FormatError(f"{path}:{lineno}: malformed header {header!r}") from None
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}:{lineno}: unsupported version {version}")
    rows = content[1:]
    if len(rows) != d + 1:
        raise FormatError(f"{path}: expected {d} weight rows plus a bias row, found {len(rows)}")
    w = np.empty((d, e), dtype=np.float64)
    for i in range(d):
        row_lineno, row = rows[i]
        tokens = row.split()
        if len(tokens) != e:
            raise FormatError(
                f"{path}:{row_lineno}: expected {e} weights, found {len(tokens)}"
            )
        for j, token in enumerate(tokens):
            w[i, j] = _parse_real(token, path, row_lineno)
    bias_lineno, bias_row = rows[d]
    tokens = bias_row.split()
    if len(tokens) != d:
        raise FormatError(f"{path}:{bias_lineno}: expected {d} biases, found {len(tokens)}")
    b = np.array([_parse_real(t, path, bias_lineno) for t in tokens])
    return SparseConceptLayer(w=w, b=b)
