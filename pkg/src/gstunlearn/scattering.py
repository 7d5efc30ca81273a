"""Graph scattering transform forward pass, plus the power-cache shortcut for
recomputing an embedding after a node removal."""
from __future__ import annotations

import csv
import functools
import itertools
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import CacheError, ParameterError, StructuralError, UnsupportedPathError
from .graph import Dataset, Graph, remove_node
from .linalg import FlopCounter, mm
from .wavelets import FilterBank, WaveletFamily, bank_from_powers, build_filter_bank, lazy_operator

__all__ = [
    "ScatteringConfig",
    "Embedding",
    "PowerCache",
    "tree_paths",
    "embed",
    "embed_dataset",
    "embed_incremental",
    "energy_constant",
    "coordinate_labels",
    "write_embeddings_csv",
]


@dataclass(frozen=True)
class ScatteringConfig:
    family: WaveletFamily = WaveletFamily()
    layers: int = 3
    nonlinearity: str = "abs"

    def __post_init__(self):
        if self.layers < 1:
            raise ParameterError("layers must be >= 1")
        if self.nonlinearity != "abs":
            raise ParameterError(f"unsupported nonlinearity {self.nonlinearity!r}")

    @property
    def Q(self) -> int:
        return self.family.Q

    @property
    def tree_size(self) -> int:
        """Number of scattering-tree nodes, ``sum_l J_eff^l`` (moments not counted)."""
        J = self.family.n_filters
        return sum(J**l for l in range(self.layers))

    @property
    def dim(self) -> int:
        """Embedding length: ``Q * tree_size``."""
        return self.Q * self.tree_size


@functools.lru_cache(maxsize=None)
def tree_paths(n_filters: int, layers: int) -> tuple[tuple[int, ...], ...]:
    """Tree paths in breadth-first, lexicographic order."""
    return tuple(
        path
        for l in range(layers)
        for path in itertools.product(range(n_filters), repeat=l)
    )


@dataclass(frozen=True, eq=False)
class Embedding:
    values: np.ndarray
    config: ScatteringConfig

    @property
    def path_index(self) -> dict:
        """``{(path, q): coordinate}``."""
        paths = tree_paths(self.config.family.n_filters, self.config.layers)
        Q = self.config.Q
        return {(p, q): i * Q + (q - 1) for i, p in enumerate(paths) for q in range(1, Q + 1)}

    def coefficient(self, path: Sequence[int], q: int = 1) -> float:
        return float(self.values[self.path_index[(tuple(path), q)]])


def coordinate_labels(config: ScatteringConfig) -> list[str]:
    paths = tree_paths(config.family.n_filters, config.layers)
    return [
        f"{'-'.join(map(str, p)) or 'root'}/q{q}" for p in paths for q in range(1, config.Q + 1)
    ]


def energy_constant(upper_frame_bound: float, layers: int) -> float:
    """``F = sqrt(sum_{l<L} B^(2l))``; equals ``sqrt(L)`` for ``B = 1``."""
    B2 = float(upper_frame_bound) ** 2
    return float(np.sqrt(sum(B2**l for l in range(layers))))


def _moments(U: np.ndarray, S: np.ndarray, Q: int, signed_first: bool) -> np.ndarray:
    # S: (m, g) signals; returns (m, Q) low-passed moments
    out = np.empty((S.shape[0], Q))
    for q in range(1, Q + 1):
        if q == 1 and signed_first:
            out[:, 0] = S @ U
        else:
            out[:, q - 1] = np.abs(S) ** q @ U
    return out


def _scatter(bank: FilterBank, x: np.ndarray, config: ScatteringConfig, counter) -> np.ndarray:
    Q = config.Q
    U = bank.low_pass
    H = bank.filters
    nf, g = H.shape[0], H.shape[1]
    layer = x.reshape(1, g)
    chunks = [_moments(U, layer, Q, signed_first=True).reshape(-1)]
    for _ in range(1, config.layers):
        # children of parent p under filter j land at row p * nf + j
        Y = np.einsum("jab,mb->mja", H, layer, optimize=True).reshape(-1, g)
        if counter is not None:
            counter.add(2 * nf * g * g * layer.shape[0])
        layer = np.abs(Y)
        chunks.append(_moments(U, layer, Q, signed_first=False).reshape(-1))
    if counter is not None:
        counter.add(2 * config.dim * g)
    return np.concatenate(chunks)


def embed(
    graph: Graph,
    config: ScatteringConfig,
    bank: FilterBank | None = None,
    counter: FlopCounter | None = None,
) -> Embedding:
    """Scattering coefficients ``Phi(S, x)`` of one graph.

    The root coefficient is ``U x``; a depth-``l`` coefficient is ``U`` applied
    to ``|H_{j_l} ... |H_{j_1} x|...|``. With ``Q > 1`` the ``q``-th moment
    ``U |s|^q`` of every tree signal ``s`` follows its first moment.
    """
    if bank is None:
        bank = build_filter_bank(graph, config.family, counter)
    elif bank.family != config.family:
        raise ParameterError("filter bank was built for a different wavelet family")
    if bank.size != graph.dim:
        raise StructuralError(f"filter bank is {bank.size}x{bank.size} but graph has {graph.dim} nodes")
    return Embedding(_scatter(bank, graph.x, config, counter), config)


def embed_dataset(dataset, config: ScatteringConfig) -> tuple[np.ndarray, np.ndarray]:
    """Stack embeddings row-wise. Accepts a :class:`Dataset` or a sequence of graphs."""
    graphs = dataset.graphs if isinstance(dataset, Dataset) else list(dataset)
    Z = np.empty((len(graphs), config.dim))
    for i, g in enumerate(graphs):
        Z[i] = embed(g, config).values
    y = np.array([g.label for g in graphs], dtype=int)
    return Z, y


@dataclass(frozen=True, eq=False)
class PowerCache:
    """``powers[k - 1] = T^k`` for ``k = 1..K`` of one graph's lazy operator."""

    powers: np.ndarray
    tag: str

    @property
    def K(self) -> int:
        return self.powers.shape[0]

    @property
    def dim(self) -> int:
        return self.powers.shape[1]

    @classmethod
    def build(cls, graph: Graph, family: WaveletFamily, counter: FlopCounter | None = None):
        if not family.polynomial:
            raise UnsupportedPathError(f"{family.tag} filters are not polynomials of a lazy operator")
        K = family.max_power
        T = lazy_operator(graph, family.tag, counter)
        powers = np.empty((K, graph.dim, graph.dim))
        powers[0] = T
        for k in range(1, K):
            powers[k] = mm(powers[k - 1], T, counter)
        return cls(powers, family.tag)

    def dyadic(self, J: int) -> dict:
        return {2**j: self.powers[2**j - 1] for j in range(J + 1)}


def _check_cache(cache: PowerCache, graph: Graph, family: WaveletFamily):
    if not family.polynomial:
        raise UnsupportedPathError(
            f"{family.tag} wavelets need an eigendecomposition; use embed() instead"
        )
    if cache.tag != family.tag:
        raise CacheError(f"cache holds powers of the {cache.tag} operator, not {family.tag}")
    if cache.K < family.max_power:
        raise CacheError(f"cache degree {cache.K} < required {family.max_power}")
    if cache.dim != graph.dim:
        raise CacheError(f"cache is for {cache.dim} nodes, graph has {graph.dim}")


def embed_incremental(
    graph: Graph,
    removed_node: int,
    cache: PowerCache,
    config: ScatteringConfig,
    counter: FlopCounter | None = None,
) -> tuple[Embedding, PowerCache]:
    """Embed ``remove_node(graph, removed_node, "masked")`` from the cached
    powers of the pre-removal operator in ``O(r K^2 g^2)`` work.

    Removing node ``k`` changes the lazy operator only in the rows and columns
    of ``R = {k} | N(k)``, so ``T' = T + X Y^T`` with ``X, Y`` of width
    ``2|R|``. New powers follow from the telescoping identity
    ``T'^k - T^k = sum_i T'^i (T' - T) T^(k-1-i)`` without any
    ``g x g x g`` product.
    """
    family = config.family
    _check_cache(cache, graph, family)
    new_graph = remove_node(graph, removed_node, mode="masked")
    g = graph.dim
    if counter is not None:
        counter.add(3 * g * g)

    T_old = cache.powers[0]
    T_new = lazy_operator(new_graph, family.tag, counter)
    R = np.union1d([removed_node], np.flatnonzero(graph.adjacency[removed_node]))
    D = T_new - T_old
    if counter is not None:
        counter.add(g * g)
    D_rows = D[R, :].copy()
    D_rows[:, R] = 0.0
    eye_R = np.zeros((g, R.size))
    eye_R[R, np.arange(R.size)] = 1.0
    X = np.hstack([D[:, R], eye_R])  # (g, 2r)
    Yt = np.vstack([eye_R.T, D_rows])  # (2r, g)

    K = cache.K
    left = [X]
    for _ in range(1, K):
        left.append(mm(T_new, left[-1], counter))
    right = [Yt] + [mm(Yt, cache.powers[m - 1], counter) for m in range(1, K)]

    powers = np.empty_like(cache.powers)
    for k in range(1, K + 1):
        Lk = np.hstack(left[:k])
        Rk = np.vstack(right[k - 1::-1])
        powers[k - 1] = cache.powers[k - 1] + mm(Lk, Rk, counter)
        if counter is not None:
            counter.add(g * g)
    new_cache = PowerCache(powers, cache.tag)

    bank = bank_from_powers(new_cache.dyadic(family.J), new_graph, family, counter)
    return Embedding(_scatter(bank, new_graph.x, config, counter), config), new_cache


def write_embeddings_csv(path, Z: np.ndarray, config: ScatteringConfig, graph_ids=None, labels=None) -> Path:
    """One row per graph; the header carries the tree-path label of each column."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Z = np.atleast_2d(Z)
    ids = range(len(Z)) if graph_ids is None else graph_ids
    labels = [""] * len(Z) if labels is None else labels
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["graph_id", "label", *coordinate_labels(config)])
        for gid, lab, row in zip(ids, labels, Z):
            w.writerow([gid, lab, *(repr(float(v)) for v in row)])
    return path
