import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gstunlearn.errors import CacheError, ParameterError, StructuralError, UnsupportedPathError
from gstunlearn.graph import Dataset, Graph, remove_node
from gstunlearn.scattering import (
    PowerCache,
    ScatteringConfig,
    coordinate_labels,
    embed,
    embed_dataset,
    embed_incremental,
    energy_constant,
    tree_paths,
    write_embeddings_csv,
)
from gstunlearn.wavelets import WaveletFamily, build_filter_bank, certified_frame_bounds

from conftest import random_graph

CYCLE4 = np.array([[0, 1, 0, 1], [1, 0, 1, 0], [0, 1, 0, 1], [1, 0, 1, 0]], dtype=float)


def naive_tree(graph, config):
    """Walk the tree one path at a time, recomputing every prefix."""
    bank = build_filter_bank(graph, config.family)
    U = bank.low_pass
    out = []
    for path in tree_paths(config.family.n_filters, config.layers):
        s = graph.x.copy()
        for j in path:
            s = np.abs(bank.filters[j] @ s)
        for q in range(1, config.Q + 1):
            out.append(U @ s if (q == 1 and not path) else U @ np.abs(s) ** q)
    return np.array(out)


class TestConfig:
    def test_dimension(self):
        assert ScatteringConfig(WaveletFamily("itersine", 3), 2).dim == 4
        assert ScatteringConfig(WaveletFamily("geometric", 3), 3).dim == 1 + 4 + 16
        assert ScatteringConfig(WaveletFamily("geometric", 4, 3), 3).dim == 3 * (1 + 5 + 25)

    def test_tree_order(self):
        assert tree_paths(2, 3) == ((), (0,), (1,), (0, 0), (0, 1), (1, 0), (1, 1))

    def test_labels(self):
        cfg = ScatteringConfig(WaveletFamily("geometric", 1, 2), 2)
        assert coordinate_labels(cfg) == ["root/q1", "root/q2", "0/q1", "0/q2", "1/q1", "1/q2"]

    def test_validation(self):
        with pytest.raises(ParameterError):
            ScatteringConfig(layers=0)
        with pytest.raises(ParameterError):
            ScatteringConfig(nonlinearity="relu")

    def test_energy_constant(self):
        assert energy_constant(1.0, 3) == pytest.approx(np.sqrt(3))
        assert energy_constant(2.0, 2) == pytest.approx(np.sqrt(5))


class TestEmbed:
    def test_cycle_against_naive_tree(self):
        g = Graph(CYCLE4, [1, -1, 1, -1])
        cfg = ScatteringConfig(WaveletFamily("geometric", 2), 2)
        np.testing.assert_allclose(embed(g, cfg).values, naive_tree(g, cfg), atol=1e-12)

    def test_cycle_hand_values(self):
        # T = (I + A/2)/2 maps the alternating signal to 0, so H0 x = x and H1 x = H2 x = 0
        g = Graph(CYCLE4, [1, -1, 1, -1])
        z = embed(g, ScatteringConfig(WaveletFamily("geometric", 2), 2))
        np.testing.assert_allclose(z.values, [0.0, 1.0, 0.0, 0.0], atol=1e-15)
        assert z.coefficient((0,)) == pytest.approx(1.0)

    @pytest.mark.parametrize("tag,Q", [("geometric", 3), ("diffusion", 1), ("itersine", 1), ("monic_cubic", 1)])
    def test_random_against_naive_tree(self, rng, tag, Q):
        cfg = ScatteringConfig(WaveletFamily(tag, 3, Q), 3)
        for _ in range(5):
            g = random_graph(rng, 7)
            np.testing.assert_allclose(embed(g, cfg).values, naive_tree(g, cfg), atol=1e-12)

    def test_zero_signal(self, rng):
        g = random_graph(rng, 6).replace(x=np.zeros(6))
        for tag in ("geometric", "itersine"):
            assert not embed(g, ScatteringConfig(WaveletFamily(tag, 3), 3)).values.any()

    def test_single_node_diffusion(self):
        z = embed(Graph(np.zeros((1, 1)), [0.3]), ScatteringConfig(WaveletFamily("diffusion", 2), 3)).values
        assert z[0] == pytest.approx(0.3)
        np.testing.assert_array_equal(z[1:], 0.0)

    def test_bank_mismatch(self, rng):
        g = random_graph(rng, 5)
        cfg = ScatteringConfig(WaveletFamily("geometric", 2), 2)
        with pytest.raises(ParameterError):
            embed(g, cfg, bank=build_filter_bank(g, WaveletFamily("diffusion", 2)))
        with pytest.raises(StructuralError):
            embed(g, cfg, bank=build_filter_bank(random_graph(rng, 4), cfg.family))

    def test_embed_dataset(self, rng):
        cfg = ScatteringConfig(WaveletFamily("itersine", 3), 2)
        gs = [random_graph(rng, 5).replace(label=i) for i in range(4)]
        Z, y = embed_dataset(Dataset(gs), cfg)
        assert Z.shape == (4, 4)
        np.testing.assert_array_equal(y, [0, 1, 2, 3])
        Z1, _ = embed_dataset(gs[:1], cfg)
        assert Z1.shape == (1, 4)
        Zr, yr = embed_dataset(gs[::-1], cfg)
        np.testing.assert_array_equal(Zr, Z[::-1])

    def test_csv(self, tmp_path, rng):
        cfg = ScatteringConfig(WaveletFamily("geometric", 1), 2)
        Z, y = embed_dataset([random_graph(rng, 4) for _ in range(2)], cfg)
        path = write_embeddings_csv(tmp_path / "z.csv", Z, cfg, [7, 8], y)
        rows = list(csv.reader(path.open()))
        assert rows[0] == ["graph_id", "label", "root/q1", "0/q1", "1/q1"]
        assert float(rows[2][3]) == Z[1, 1]


@st.composite
def small_graphs(draw):
    g = draw(st.integers(1, 6))
    bits = draw(st.lists(st.booleans(), min_size=g * g, max_size=g * g))
    upper = np.triu(np.array(bits, dtype=float).reshape(g, g), k=1)
    x = draw(st.lists(st.floats(-1, 1), min_size=g, max_size=g))
    perm = draw(st.permutations(range(g)))
    return Graph(upper + upper.T, x), np.array(perm)


class TestProperties:
    @settings(max_examples=60, deadline=None)
    @given(small_graphs(), st.sampled_from(["geometric", "diffusion", "itersine", "monic_cubic"]))
    def test_permutation_invariance(self, data, tag):
        g, perm = data
        cfg = ScatteringConfig(WaveletFamily(tag, 3), 3)
        np.testing.assert_allclose(embed(g.permuted(perm), cfg).values, embed(g, cfg).values, atol=1e-10)

    @settings(max_examples=60, deadline=None)
    @given(small_graphs(), st.sampled_from(["geometric", "diffusion", "itersine", "monic_cubic"]))
    def test_deeper_coefficients_nonnegative(self, data, tag):
        cfg = ScatteringConfig(WaveletFamily(tag, 2), 3)
        assert np.all(embed(data[0], cfg).values[1:] >= 0)

    @pytest.mark.parametrize("tag", ["geometric", "itersine", "monic_cubic"])
    def test_energy_bound(self, rng, tag):
        cfg = ScatteringConfig(WaveletFamily(tag, 3), 3)
        for _ in range(20):
            g = random_graph(rng, int(rng.integers(2, 20)))
            bank = build_filter_bank(g, cfg.family)
            F = energy_constant(certified_frame_bounds(bank)[1], 3)
            assert np.linalg.norm(embed(g, cfg, bank=bank).values) <= F + 1e-12


class TestIncremental:
    @pytest.mark.parametrize("tag", ["diffusion", "geometric"])
    def test_matches_from_scratch(self, rng, tag):
        cfg = ScatteringConfig(WaveletFamily(tag, 2), 3)
        for _ in range(10):
            g = random_graph(rng, 6)
            v = int(rng.integers(6))
            cache = PowerCache.build(g, cfg.family)
            z, new_cache = embed_incremental(g, v, cache, cfg)
            fresh = remove_node(g, v, "masked")
            np.testing.assert_allclose(z.values, embed(fresh, cfg).values, atol=1e-10)
            np.testing.assert_allclose(new_cache.powers, PowerCache.build(fresh, cfg.family).powers, atol=1e-12)

    def test_sequential_removals(self, rng):
        cfg = ScatteringConfig(WaveletFamily("geometric", 3, 2), 3)
        g = random_graph(rng, 12)
        cache = PowerCache.build(g, cfg.family)
        for v in rng.permutation(12)[:8]:
            z, cache = embed_incremental(g, int(v), cache, cfg)
            g = remove_node(g, int(v), "masked")
            np.testing.assert_allclose(z.values, embed(g, cfg).values, atol=1e-10)

    def test_isolated_node(self):
        A = np.zeros((4, 4))
        A[0, 1] = A[1, 0] = A[1, 2] = A[2, 1] = 1
        g = Graph(A, [0.5, -1, 0.2, 0.9])
        cfg = ScatteringConfig(WaveletFamily("geometric", 2), 3)
        z, _ = embed_incremental(g, 3, PowerCache.build(g, cfg.family), cfg)
        np.testing.assert_array_equal(z.values, embed(remove_node(g, 3, "masked"), cfg).values)

    def test_errors(self, rng):
        g = random_graph(rng, 5)
        cfg = ScatteringConfig(WaveletFamily("geometric", 3), 2)
        small = PowerCache.build(g, WaveletFamily("geometric", 2))
        with pytest.raises(CacheError):
            embed_incremental(g, 0, small, cfg)
        with pytest.raises(CacheError):
            embed_incremental(g, 0, PowerCache.build(g, WaveletFamily("diffusion", 3)), cfg)
        with pytest.raises(CacheError):
            embed_incremental(g, 0, PowerCache.build(random_graph(rng, 4), cfg.family), cfg)
        spectral = ScatteringConfig(WaveletFamily("itersine", 3), 2)
        with pytest.raises(UnsupportedPathError):
            embed_incremental(g, 0, small, spectral)
        with pytest.raises(UnsupportedPathError):
            PowerCache.build(g, spectral.family)
