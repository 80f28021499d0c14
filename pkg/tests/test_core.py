import math

import numpy as np
import pytest

from nesyvit.core import (
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


def make_dataset(x, labels, names=None):
    labels = np.asarray(labels)
    if names is None:
        names = [f"c{i}" for i in range(int(labels.max()) + 1)]
    return EmbeddingDataset(x=np.asarray(x, dtype=float), labels=labels, class_names=names)


class TestForward:
    def test_zero_layer_gives_half_everywhere(self):
        layer = SparseConceptLayer(w=np.zeros((3, 2)), b=np.zeros(3))
        data = make_dataset([[5.0, -3.0], [0.1, 0.2]], [0, 0])
        acts = forward(layer, data)
        assert np.all(acts.z == 0.5)

    def test_scalar_zero_preactivation(self):
        layer = SparseConceptLayer(w=[[1.0]], b=[0.0])
        acts = forward(layer, make_dataset([[0.0]], [0]))
        assert acts.z[0, 0] == 0.5

    def test_scalar_unit_preactivation(self):
        # W=2, b=-1, x=1 -> sigmoid(1), evaluated independently.
        layer = SparseConceptLayer(w=[[2.0]], b=[-1.0])
        acts = forward(layer, make_dataset([[1.0]], [0]))
        expected = 1.0 / (1.0 + math.exp(-1.0))
        assert acts.z[0, 0] == pytest.approx(expected, abs=1e-12)
        assert acts.z[0, 0] == pytest.approx(0.731059, abs=1e-6)

    def test_dimension_mismatch_names_both_dimensions(self):
        layer = SparseConceptLayer(w=np.zeros((2, 3)), b=np.zeros(2))
        data = make_dataset([[1.0, 2.0]], [0])
        with pytest.raises(ValueError, match=r"E=3.*E=2"):
            forward(layer, data)

    def test_labels_copied_through(self):
        layer = init_layer(4, 3, seed=0)
        data = make_dataset(np.ones((3, 3)), [0, 1, 0])
        acts = forward(layer, data)
        assert np.array_equal(acts.labels, data.labels)
        assert acts.class_names == data.class_names

    def test_outputs_always_in_unit_interval(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            d, e, n = rng.integers(1, 6, size=3)
            layer = SparseConceptLayer(
                w=rng.normal(scale=10.0, size=(d, e)), b=rng.normal(scale=10.0, size=d)
            )
            data = make_dataset(rng.normal(scale=10.0, size=(n, e)), np.zeros(n, dtype=int))
            acts = forward(layer, data)
            assert acts.z.min() >= 0.0 and acts.z.max() <= 1.0

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(3)
        layer = init_layer(5, 4, seed=1)
        data = make_dataset(rng.normal(size=(8, 4)), rng.integers(0, 2, size=8))
        perm = rng.permutation(8)
        permuted = make_dataset(data.x[perm], data.labels[perm])
        assert np.array_equal(forward(layer, data).z[perm], forward(layer, permuted).z)


class TestBinarize:
    def test_extremes(self):
        acts = ActivationBatch(z=[[0.0, 1.0]], labels=[0])
        assert binarize(acts).bits.tolist() == [[0, 1]]

    def test_tie_maps_to_one(self):
        acts = ActivationBatch(z=[[0.5]], labels=[0])
        assert binarize(acts).bits.tolist() == [[1]]

    def test_near_threshold(self):
        acts = ActivationBatch(z=[[0.49, 0.51, 0.5]], labels=[0])
        assert binarize(acts).bits.tolist() == [[0, 1, 1]]

    @pytest.mark.parametrize("threshold", [0.0, 1.0, -0.2, 1.5])
    def test_threshold_must_be_interior(self, threshold):
        acts = ActivationBatch(z=[[0.5]], labels=[0])
        with pytest.raises(ValueError):
            binarize(acts, threshold=threshold)

    def test_idempotent_on_bits(self):
        rng = np.random.default_rng(0)
        bits = rng.integers(0, 2, size=(6, 4)).astype(float)
        acts = ActivationBatch(z=bits, labels=np.zeros(6, dtype=int))
        once = binarize(acts)
        again = binarize(ActivationBatch(z=once.bits.astype(float), labels=once.labels))
        assert np.array_equal(once.bits, again.bits)

    def test_labels_preserved(self):
        acts = ActivationBatch(z=[[0.9], [0.1]], labels=[1, 0], class_names=["a", "b"])
        table = binarize(acts)
        assert table.labels.tolist() == [1, 0]
        assert table.class_names == ["a", "b"]


class TestInvariants:
    def test_activation_batch_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            ActivationBatch(z=[[1.2]], labels=[0])
        with pytest.raises(ValueError):
            ActivationBatch(z=[[-0.1]], labels=[0])

    def test_embedding_label_out_of_range(self):
        with pytest.raises(ValueError):
            EmbeddingDataset(x=np.ones((1, 2)), labels=[1], class_names=["a"])

    def test_table_rejects_non_binary(self):
        with pytest.raises(ValueError):
            BinaryConceptTable(
                bits=[[2]], labels=[0], neuron_names=["n0"], class_names=["a"]
            )

    def test_init_layer_deterministic_and_bounded(self):
        a = init_layer(8, 5, seed=11)
        b = init_layer(8, 5, seed=11)
        assert np.array_equal(a.w, b.w) and np.array_equal(a.b, b.b)
        bound = 1.0 / math.sqrt(5)
        assert np.all(np.abs(a.w) <= bound)
        assert np.all(a.b == 0.0)


class TestFileRoundTrips:
    def test_embeddings_round_trip(self, tmp_path):
        rng = np.random.default_rng(5)
        data = make_dataset(rng.normal(size=(2, 3)), [1, 0], names=["x", "y", "unused"])
        path = str(tmp_path / "emb.txt")
        save_embeddings(data, path, header_comment="round trip")
        back = load_embeddings(path)
        assert np.array_equal(back.x, data.x)
        assert np.array_equal(back.labels, data.labels)
        assert back.class_names == data.class_names

    def test_random_round_trips_exact(self, tmp_path):
        rng = np.random.default_rng(9)
        for i in range(10):
            n, e = int(rng.integers(1, 7)), int(rng.integers(1, 7))
            data = make_dataset(
                rng.normal(scale=rng.uniform(0.01, 100.0), size=(n, e)),
                rng.integers(0, 2, size=n),
                names=["a", "b"],
            )
            path = str(tmp_path / f"emb{i}.txt")
            save_embeddings(data, path)
            back = load_embeddings(path)
            assert np.array_equal(back.x, data.x)  # exact, stronger than 1e-12

    def test_table_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        table = BinaryConceptTable(
            bits=rng.integers(0, 2, size=(5, 3)),
            labels=rng.integers(0, 2, size=5),
            neuron_names=["n0", "n1", "n2"],
            class_names=["a", "b", "ghost"],
        )
        path = str(tmp_path / "table.csv")
        save_table(table, path)
        back = load_table(path)
        assert np.array_equal(back.bits, table.bits)
        assert np.array_equal(back.labels, table.labels)
        assert back.neuron_names == table.neuron_names
        assert back.class_names == table.class_names

    def test_layer_round_trip(self, tmp_path):
        rng = np.random.default_rng(4)
        layer = SparseConceptLayer(w=rng.normal(size=(3, 4)), b=rng.normal(size=3))
        path = str(tmp_path / "layer.txt")
        save_layer(layer, path, header_comment="layer file")
        back = load_layer(path)
        assert np.array_equal(back.w, layer.w)
        assert np.array_equal(back.b, layer.b)


class TestFileErrors:
    def test_empty_file_missing_header(self, tmp_path):
        path = tmp_path / "empty.txt"
        path.write_text("")
        with pytest.raises(FormatError, match="missing header"):
            load_embeddings(str(path))

    def test_row_arity_mismatch_names_line(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("nesyvit-emb 1 1 4\na,1.0,2.0,3.0\n")
        with pytest.raises(FormatError, match=r":2:"):
            load_embeddings(str(path))

    def test_non_numeric_field(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("nesyvit-emb 1 1 2\na,1.0,oops\n")
        with pytest.raises(FormatError, match="non-numeric"):
            load_embeddings(str(path))

    def test_unknown_label_with_declared_classes(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("# classes: a,b\nnesyvit-emb 1 1 1\nzz,1.0\n")
        with pytest.raises(FormatError, match=r":3: unknown label"):
            load_embeddings(str(path))

    def test_malformed_header(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("something else\n")
        with pytest.raises(FormatError, match="malformed header"):
            load_embeddings(str(path))

    def test_layer_row_count_mismatch(self, tmp_path):
        path = tmp_path / "layer.txt"
        path.write_text("nesyvit-layer 1 2 1\n0.5\n0.0 0.0\n")
        with pytest.raises(FormatError):
            load_layer(str(path))

    def test_table_non_binary_entry(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("label,n0\na,2\n")
        with pytest.raises(FormatError, match="non-binary"):
            load_table(str(path))
