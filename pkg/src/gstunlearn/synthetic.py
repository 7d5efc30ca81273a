"""Two-class synthetic graph benchmark: two-community stochastic block model
graphs against Erdos-Renyi graphs of matched expected density."""
from __future__ import annotations

import numpy as np

from .errors import ParameterError
from .graph import Dataset, Graph, normalize_features

__all__ = ["sbm_graph", "er_graph", "make_synthetic"]


def _symmetric_bernoulli(P: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    upper = np.triu(rng.random(P.shape) < P, k=1).astype(float)
    return upper + upper.T


def sbm_graph(g: int, p_in: float, p_out: float, rng: np.random.Generator) -> np.ndarray:
    """Adjacency of a two-block SBM on ``g`` nodes (blocks of sizes ``ceil(g/2)``, ``floor(g/2)``)."""
    block = np.arange(g) >= (g + 1) // 2
    P = np.where(block[:, None] == block[None, :], p_in, p_out)
    return _symmetric_bernoulli(P, rng)


def er_graph(g: int, p: float, rng: np.random.Generator) -> np.ndarray:
    return _symmetric_bernoulli(np.full((g, g), p), rng)


def make_synthetic(
    n_graphs: int = 200,
    min_nodes: int = 8,
    max_nodes: int = 32,
    p_in: float = 0.7,
    p_out: float = 0.05,
    signal: str = "blocks",
    seed: int = 0,
) -> Dataset:
    """Balanced dataset: label 1 for SBM graphs, label 0 for ER graphs.

    The ER edge probability equals the SBM's expected density, so the classes
    differ in structure rather than edge count.

    ``signal="blocks"`` puts ``+1`` on the first half of the nodes and ``-1``
    on the rest. On SBM graphs the halves are the communities, so the signal
    is smooth; on ER graphs it is not. ``signal="degree"`` uses max-abs
    normalized degrees.
    """
    if signal not in ("blocks", "degree"):
        raise ParameterError(f"unknown signal {signal!r}")
    if n_graphs < 2:
        raise ParameterError("need at least two graphs")
    if not 1 <= min_nodes <= max_nodes:
        raise ParameterError("need 1 <= min_nodes <= max_nodes")
    if not (0 <= p_out <= 1 and 0 <= p_in <= 1):
        raise ParameterError("edge probabilities must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    graphs = []
    for i in range(n_graphs):
        g = int(rng.integers(min_nodes, max_nodes + 1))
        label = i % 2
        if label == 1:
            A = sbm_graph(g, p_in, p_out, rng)
        else:
            a = (g + 1) // 2
            b = g - a
            pairs = g * (g - 1) / 2
            within = (a * (a - 1) + b * (b - 1)) / 2
            p = (within * p_in + (pairs - within) * p_out) / pairs if pairs else 0.0
            A = er_graph(g, p, rng)
        if signal == "blocks":
            x = np.where(np.arange(g) < (g + 1) // 2, 1.0, -1.0)
        else:
            x = normalize_features(A.sum(axis=1))
        graphs.append(Graph(A, x, graph_id=i + 1, label=label))
    order = rng.permutation(n_graphs)
    return Dataset(tuple(graphs[k].replace(graph_id=j + 1) for j, k in enumerate(order)))
