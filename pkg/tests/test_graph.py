import numpy as np
import pytest

from gstunlearn.errors import DegenerateGraphError, ParseError, StructuralError, ParameterError
from gstunlearn.graph import (
    Dataset,
    Graph,
    load_dataset,
    normalize_features,
    random_split,
    remove_node,
    write_dataset,
    zero_feature,
)
from gstunlearn.scattering import ScatteringConfig, embed
from gstunlearn.wavelets import WaveletFamily

from conftest import random_graph


def write_tu(root, edges, indicator, labels, attrs=None, prefix=""):
    root.mkdir(parents=True, exist_ok=True)
    (root / f"{prefix}A.txt").write_text("".join(f"{i}, {j}\n" for i, j in edges))
    (root / f"{prefix}graph_indicator.txt").write_text("".join(f"{v}\n" for v in indicator))
    (root / f"{prefix}graph_labels.txt").write_text("".join(f"{v}\n" for v in labels))
    if attrs is not None:
        (root / f"{prefix}node_attributes.txt").write_text("".join(f"{v}\n" for v in attrs))
    return root


PATH3 = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=float)


class TestGraphModel:
    def test_rejects_asymmetric(self):
        with pytest.raises(StructuralError):
            Graph(np.array([[0, 1], [0, 0]]), [1, 1])

    def test_rejects_self_loop_and_negative(self):
        with pytest.raises(StructuralError):
            Graph(np.eye(2), [1, 1])
        with pytest.raises(StructuralError):
            Graph(-PATH3, [1, 1, 1])

    def test_rejects_feature_length(self):
        with pytest.raises(StructuralError):
            Graph(PATH3, [1, 1])

    def test_immutable(self):
        g = Graph(PATH3, [1, 0, 1])
        with pytest.raises(ValueError):
            g.x[0] = 3.0
        with pytest.raises(ValueError):
            g.adjacency[0, 1] = 3.0

    def test_split_must_partition(self):
        gs = [Graph(PATH3, [1, 1, 1])] * 3
        with pytest.raises(StructuralError):
            Dataset(gs, {"train": (0, 1), "val": (1,), "test": (2,)})
        with pytest.raises(StructuralError):
            Dataset(gs, {"train": (0,), "val": (), "test": (2,)})
        ds = Dataset(gs)
        assert ds.n == 3 and ds.split["train"] == (0, 1, 2)

    def test_random_split(self):
        sp = random_split(10, (0.1, 0.1, 0.8), seed=3)
        assert [len(sp[k]) for k in ("train", "val", "test")] == [1, 1, 8]
        assert sorted(sp["train"] + sp["val"] + sp["test"]) == list(range(10))
        assert sp == random_split(10, (0.1, 0.1, 0.8), seed=3)
        with pytest.raises(ParameterError):
            random_split(10, (0.5, 0.6, 0.1), seed=0)


class TestEdits:
    def test_zero_feature(self):
        g = Graph(PATH3, [1, -0.5, 0.2])
        out = zero_feature(g, 2)
        np.testing.assert_array_equal(out.x, [1, -0.5, 0])
        np.testing.assert_array_equal(out.adjacency, g.adjacency)

    def test_zero_feature_idempotent_on_zero(self):
        g = Graph(np.zeros((2, 2)), [0, 0])
        np.testing.assert_array_equal(zero_feature(g, 0).x, [0, 0])

    def test_zero_feature_out_of_range(self):
        with pytest.raises(IndexError):
            zero_feature(Graph(PATH3, [1, 1, 1]), 3)

    def test_zero_feature_change_bounded(self, rng):
        for _ in range(20):
            g = random_graph(rng, 6)
            v = int(rng.integers(6))
            assert np.linalg.norm(g.x - zero_feature(g, v).x) == pytest.approx(abs(g.x[v]))

    def test_remove_node_shrink_path(self):
        out = remove_node(Graph(PATH3, [1, 2, 3]), 2)
        np.testing.assert_array_equal(out.adjacency, [[0, 1], [1, 0]])
        np.testing.assert_array_equal(out.x, [1, 2])

    def test_remove_node_masked_path(self):
        out = remove_node(Graph(PATH3, [1, 2, 3]), 2, mode="masked")
        assert not out.adjacency[2].any() and not out.adjacency[:, 2].any()
        assert out.x[2] == 0 and out.node_count == 2 and out.dim == 3

    def test_masked_matches_diagonal_perturbation(self):
        S = np.array([[0, 1, 1], [1, 0, 1], [1, 1, 0]], dtype=float)
        E = np.diag([0.0, 0.0, -1.0])
        out = remove_node(Graph(S, [1, 1, 1]), 2, mode="masked")
        np.testing.assert_array_equal(out.adjacency, S + E @ S + S @ E)

    def test_remove_last_node(self):
        with pytest.raises(DegenerateGraphError):
            remove_node(Graph(np.zeros((1, 1)), [1.0]), 0)
        g = remove_node(Graph(np.zeros((2, 2)), [1, 1]), 0, mode="masked")
        with pytest.raises(DegenerateGraphError):
            remove_node(g, 1, mode="masked")

    def test_remove_twice(self):
        g = remove_node(Graph(PATH3, [1, 1, 1]), 1, mode="masked")
        with pytest.raises(StructuralError):
            remove_node(g, 1, mode="masked")

    def test_edits_keep_symmetry(self, rng):
        for _ in range(20):
            g = random_graph(rng, 7)
            v = int(rng.integers(7))
            for out in (remove_node(g, v), remove_node(g, v, "masked"), zero_feature(g, v)):
                np.testing.assert_array_equal(out.adjacency, out.adjacency.T)

    @pytest.mark.parametrize("tag", ["geometric", "diffusion", "itersine", "monic_cubic"])
    def test_masked_and_shrink_embed_identically(self, rng, tag):
        cfg = ScatteringConfig(WaveletFamily(tag, 3), 3)
        for g_size in range(2, 9):
            g = random_graph(rng, g_size, p=0.5)
            for v in range(g_size):
                a = embed(remove_node(g, v, "shrink"), cfg).values
                b = embed(remove_node(g, v, "masked"), cfg).values
                np.testing.assert_allclose(a, b, atol=1e-10, rtol=0)


class TestNormalization:
    def test_max_abs(self):
        np.testing.assert_array_equal(normalize_features([5.0]), [1.0])
        np.testing.assert_allclose(normalize_features([2.0, -4.0, 1.0]), [0.5, -1.0, 0.25])
        np.testing.assert_array_equal(normalize_features([0.0, 0.0]), [0.0, 0.0])


class TestLoader:
    def test_triangle(self, tmp_path):
        root = write_tu(tmp_path / "t", [(1, 2), (2, 3), (1, 3)], [1, 1, 1], [0], [1.0, 1.0, 1.0])
        ds = load_dataset(root)
        g = ds.graphs[0]
        assert ds.n == 1 and g.dim == 3
        np.testing.assert_array_equal(g.adjacency, np.ones((3, 3)) - np.eye(3))

    def test_single_node_normalized(self, tmp_path):
        root = write_tu(tmp_path / "s", [], [1], [1], [5.0])
        np.testing.assert_array_equal(load_dataset(root).graphs[0].x, [1.0])

    def test_indicator_partition(self, tmp_path):
        root = write_tu(tmp_path / "p", [(1, 2)], [1, 1, 2], [0, 1])
        ds = load_dataset(root)
        assert ds.n == 2 and [g.dim for g in ds.graphs] == [2, 1]
        np.testing.assert_array_equal(ds.labels, [0, 1])

    def test_degree_features(self, tmp_path):
        root = write_tu(tmp_path / "d", [(1, 2), (2, 3)], [1, 1, 1], [0])
        np.testing.assert_allclose(load_dataset(root).graphs[0].x, [0.5, 1.0, 0.5])

    def test_features_within_unit_box(self, tmp_path, rng):
        attrs = rng.normal(0, 10, 9)
        root = write_tu(tmp_path / "b", [(1, 2), (4, 5), (7, 8)], [1, 1, 1, 2, 2, 2, 3, 3, 3], [0, 1, 0], attrs)
        ds = load_dataset(root)
        assert max(np.abs(g.x).max() for g in ds.graphs) <= 1.0
        assert all(np.abs(g.x).max() == 1.0 for g in ds.graphs)

    def test_both_directions_accepted(self, tmp_path):
        root = write_tu(tmp_path / "r", [(1, 2), (2, 1)], [1, 1], [0])
        np.testing.assert_array_equal(load_dataset(root).graphs[0].adjacency, [[0, 1], [1, 0]])

    def test_mixed_directions_rejected(self, tmp_path):
        root = write_tu(tmp_path / "m", [(1, 2), (2, 1), (2, 3)], [1, 1, 1], [0])
        with pytest.raises(StructuralError, match="asymmetric"):
            load_dataset(root)

    def test_prefixed_files(self, tmp_path):
        root = write_tu(tmp_path / "x", [(1, 2)], [1, 1], [3], prefix="TOY_")
        assert load_dataset(root).graphs[0].label == 3

    def test_parse_error_has_line_number(self, tmp_path):
        root = write_tu(tmp_path / "e", [(1, 2)], [1, 1], [0])
        (root / "A.txt").write_text("1, 2\n2; 1\n")
        with pytest.raises(ParseError) as info:
            load_dataset(root)
        assert info.value.lineno == 2 and "A.txt:2" in str(info.value)

    def test_node_out_of_range(self, tmp_path):
        root = write_tu(tmp_path / "o", [(1, 7)], [1, 1], [0])
        with pytest.raises(StructuralError):
            load_dataset(root)

    def test_cross_graph_edge(self, tmp_path):
        root = write_tu(tmp_path / "c", [(1, 3)], [1, 1, 2], [0, 1])
        with pytest.raises(StructuralError):
            load_dataset(root)

    def test_round_trip(self, tmp_path, rng):
        gs = [random_graph(rng, int(rng.integers(1, 7))).replace(label=i % 2) for i in range(5)]
        ds = Dataset([g.replace(x=normalize_features(g.x)) for g in gs])
        back = load_dataset(write_dataset(ds, tmp_path / "rt"))
        for a, b in zip(ds.graphs, back.graphs):
            np.testing.assert_array_equal(a.adjacency, b.adjacency)
            np.testing.assert_array_equal(a.x, b.x)
            assert a.label == b.label
