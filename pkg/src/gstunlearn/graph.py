"""Graph data model and TU-style dataset ingestion, plus the structural edits
used by removal requests.

Graphs are small and stored densely. Every edit returns a new :class:`Graph`;
nothing is mutated in place, so graphs can be shared across workers.

Node removal has two representations:

* ``"shrink"`` deletes the row/column and the feature entry (``g' = g - 1``).
* ``"masked"`` keeps the matrix dimension, zeroes the node's feature and
  incident edges through ``S' = S + E S + S E`` with ``E = diag(0,..,-1,..,0)``
  and marks the node inactive. Averaging operators divide by the number of
  *active* nodes, which makes both representations embed identically.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DegenerateGraphError, ParameterError, ParseError, StructuralError

__all__ = [
    "Graph",
    "Dataset",
    "load_dataset",
    "zero_feature",
    "remove_node",
    "normalize_features",
    "random_split",
]


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Graph:
    """One training example: symmetric adjacency, scalar node signal, label.

    ``active`` is ``None`` for an unedited graph; after masked node removals
    it is a boolean vector marking the nodes that still exist.
    """

    adjacency: np.ndarray
    x: np.ndarray
    graph_id: int = 0
    label: int = 0
    active: np.ndarray | None = None

    def __post_init__(self):
        A = _frozen(self.adjacency)
        x = _frozen(self.x).reshape(-1)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise StructuralError(f"adjacency must be square, got shape {A.shape}")
        if A.shape[0] < 1:
            raise DegenerateGraphError("a graph needs at least one node")
        if x.shape[0] != A.shape[0]:
            raise StructuralError(
                f"feature length {x.shape[0]} does not match node count {A.shape[0]}"
            )
        if not np.array_equal(A, A.T):
            raise StructuralError("adjacency is not symmetric")
        if np.any(np.diag(A) != 0):
            raise StructuralError("adjacency must have a zero diagonal")
        if np.any(A < 0):
            raise StructuralError("adjacency entries must be nonnegative")
        object.__setattr__(self, "adjacency", A)
        object.__setattr__(self, "x", x)
        if self.active is not None:
            mask = np.array(self.active, dtype=bool, copy=True).reshape(-1)
            if mask.shape[0] != A.shape[0]:
                raise StructuralError("active mask length does not match node count")
            if not mask.any():
                raise DegenerateGraphError("a graph needs at least one active node")
            mask.setflags(write=False)
            object.__setattr__(self, "active", mask)

    @property
    def dim(self) -> int:
        """Matrix dimension (includes masked-out nodes)."""
        return self.adjacency.shape[0]

    @property
    def node_count(self) -> int:
        """Number of nodes that still exist (``g`` in the bounds)."""
        if self.active is None:
            return self.dim
        return int(self.active.sum())

    @property
    def active_mask(self) -> np.ndarray:
        if self.active is None:
            return np.ones(self.dim, dtype=bool)
        return self.active

    @property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    def replace(self, **changes) -> "Graph":
        return dataclasses.replace(self, **changes)

    def permuted(self, perm: Sequence[int]) -> "Graph":
        """Relabel nodes so that new node ``i`` is old node ``perm[i]``."""
        p = np.asarray(perm, dtype=int)
        active = None if self.active is None else self.active[p]
        return self.replace(adjacency=self.adjacency[np.ix_(p, p)], x=self.x[p], active=active)


@dataclass(frozen=True)
class Dataset:
    graphs: tuple[Graph, ...]
    split: dict = field(default_factory=dict)

    def __post_init__(self):
        graphs = tuple(self.graphs)
        object.__setattr__(self, "graphs", graphs)
        n = len(graphs)
        split = dict(self.split) if self.split else {"train": tuple(range(n)), "val": (), "test": ()}
        for key in ("train", "val", "test"):
            split[key] = tuple(int(i) for i in split.get(key, ()))
        seen = [i for key in ("train", "val", "test") for i in split[key]]
        if sorted(seen) != list(range(n)):
            raise StructuralError("split index sets must be disjoint and cover every graph once")
        object.__setattr__(self, "split", split)

    @property
    def n(self) -> int:
        return len(self.graphs)

    @property
    def labels(self) -> np.ndarray:
        return np.array([g.label for g in self.graphs], dtype=int)

    def with_split(self, train, val=(), test=()) -> "Dataset":
        return Dataset(self.graphs, {"train": train, "val": val, "test": test})

    def subset(self, key: str) -> list[Graph]:
        return [self.graphs[i] for i in self.split[key]]


def random_split(n: int, ratios: Sequence[float], seed: int) -> dict:
    """Shuffle ``range(n)`` and cut it into train/val/test by ``ratios``."""
    ratios = np.asarray(ratios, dtype=float)
    if ratios.shape != (3,) or np.any(ratios < 0) or not np.isclose(ratios.sum(), 1.0):
        raise ParameterError(f"split ratios must be three nonnegative numbers summing to 1, got {ratios}")
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(round(ratios[0] * n))
    n_val = int(round(ratios[1] * n))
    n_val = min(n_val, n - n_train)
    return {
        "train": tuple(sorted(order[:n_train].tolist())),
        "val": tuple(sorted(order[n_train:n_train + n_val].tolist())),
        "test": tuple(sorted(order[n_train + n_val:].tolist())),
    }


def normalize_features(x: np.ndarray) -> np.ndarray:
    """Max-abs rescale so every ``|x[j]| <= 1``; an all-zero signal is left alone."""
    x = np.asarray(x, dtype=float)
    scale = np.max(np.abs(x)) if x.size else 0.0
    if scale == 0:
        return x.copy()
    out = x / scale
    # guard the exact |x| <= 1 invariant against rounding
    return np.clip(out, -1.0, 1.0)


def zero_feature(graph: Graph, node: int) -> Graph:
    """Return a copy of ``graph`` with ``x[node] = 0``."""
    if not 0 <= node < graph.dim:
        raise IndexError(f"node {node} out of range for graph with {graph.dim} nodes")
    x = graph.x.copy()
    x[node] = 0.0
    return graph.replace(x=x)


def remove_node(graph: Graph, node: int, mode: str = "shrink") -> Graph:
    """Delete ``node`` together with its feature and incident edges.

    ``mode="shrink"`` drops the row/column; ``mode="masked"`` keeps the
    dimension and applies ``S' = S + E S + S E``.
    """
    if not 0 <= node < graph.dim:
        raise IndexError(f"node {node} out of range for graph with {graph.dim} nodes")
    mask = graph.active_mask
    if not mask[node]:
        raise StructuralError(f"node {node} was already removed")
    if graph.node_count <= 1:
        raise DegenerateGraphError("cannot remove the last node; request whole-graph removal instead")
    if mode == "shrink":
        keep = np.arange(graph.dim) != node
        active = None if graph.active is None else graph.active[keep]
        return graph.replace(
            adjacency=graph.adjacency[np.ix_(keep, keep)], x=graph.x[keep], active=active
        )
    if mode == "masked":
        S = graph.adjacency
        e = np.zeros(graph.dim)
        e[node] = -1.0
        S_new = S + e[:, None] * S + S * e[None, :]
        x = graph.x.copy()
        x[node] = 0.0
        new_mask = mask.copy()
        new_mask[node] = False
        return graph.replace(adjacency=S_new, x=x, active=new_mask)
    raise ParameterError(f"unknown removal mode {mode!r}")


# --- TU-format ingestion -------------------------------------------------------------


def _find(root: Path, key: str, required: bool = True) -> Path | None:
    direct = root / f"{key}.txt"
    if direct.exists():
        return direct
    hits = sorted(root.glob(f"*_{key}.txt"))
    if hits:
        return hits[0]
    if required:
        raise FileNotFoundError(f"{root}: missing {key}.txt")
    return None


def _read_lines(path: Path) -> list[tuple[int, str]]:
    lines = path.read_text().splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    return [(i + 1, line.strip()) for i, line in enumerate(lines)]


def _read_column(path: Path, cast):
    values = []
    for lineno, line in _read_lines(path):
        if not line or "," in line:
            raise ParseError(path, lineno, f"expected a single value, got {line!r}")
        try:
            values.append(cast(line))
        except ValueError:
            raise ParseError(path, lineno, f"cannot parse {line!r}") from None
    return values


def load_dataset(path, format: str = "tu") -> Dataset:
    """Read a TU-style directory (``A.txt``, ``graph_indicator.txt``,
    ``graph_labels.txt``, optional ``node_attributes.txt``).

    Files may also carry a dataset prefix (``IMDB-BINARY_A.txt``). Edges may
    be listed once or in both directions; a mix of the two is rejected.
    Graphs without node attributes get degree features. Every graph's signal
    is max-abs normalized.
    """
    if format != "tu":
        raise ParameterError(f"unsupported dataset format {format!r}")
    root = Path(path)
    indicator_path = _find(root, "graph_indicator")
    labels_path = _find(root, "graph_labels")
    edges_path = _find(root, "A")
    attr_path = _find(root, "node_attributes", required=False)

    indicator = _read_column(indicator_path, int)
    labels = _read_column(labels_path, lambda s: int(float(s)))
    n_nodes = len(indicator)
    n_graphs = len(labels)
    if n_nodes == 0:
        raise StructuralError(f"{indicator_path}: no nodes declared")
    for k, gid in enumerate(indicator):
        if not 1 <= gid <= n_graphs:
            raise StructuralError(
                f"{indicator_path}:{k + 1}: graph id {gid} outside 1..{n_graphs}"
            )

    members: list[list[int]] = [[] for _ in range(n_graphs)]
    local = np.empty(n_nodes, dtype=int)
    for node, gid in enumerate(indicator):
        local[node] = len(members[gid - 1])
        members[gid - 1].append(node)
    for gi, nodes in enumerate(members):
        if not nodes:
            raise StructuralError(f"graph {gi + 1} has no nodes")

    pairs = set()
    for lineno, line in _read_lines(edges_path):
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 2:
            raise ParseError(edges_path, lineno, f"expected 'i, j', got {line!r}")
        try:
            i, j = int(parts[0]), int(parts[1])
        except ValueError:
            raise ParseError(edges_path, lineno, f"non-integer node index in {line!r}") from None
        for v in (i, j):
            if not 1 <= v <= n_nodes:
                raise StructuralError(f"{edges_path}:{lineno}: node {v} outside 1..{n_nodes}")
        if indicator[i - 1] != indicator[j - 1]:
            raise StructuralError(f"{edges_path}:{lineno}: edge {i},{j} joins two different graphs")
        if i != j:
            pairs.add((i - 1, j - 1))

    reciprocated = sum((j, i) in pairs for (i, j) in pairs)
    if 0 < reciprocated < len(pairs):
        raise StructuralError(
            f"{edges_path}: asymmetric edge list ({len(pairs) - reciprocated} of "
            f"{len(pairs)} directed edges have no reverse)"
        )

    if attr_path is not None:
        attrs = np.asarray(_read_column(attr_path, float))
        if attrs.shape[0] != n_nodes:
            raise StructuralError(f"{attr_path}: {attrs.shape[0]} values for {n_nodes} nodes")
    else:
        attrs = None

    adjs = [np.zeros((len(m), len(m))) for m in members]
    for i, j in pairs:
        A = adjs[indicator[i] - 1]
        A[local[i], local[j]] = 1.0
        A[local[j], local[i]] = 1.0

    graphs = []
    for gi, nodes in enumerate(members):
        A = adjs[gi]
        raw = attrs[nodes] if attrs is not None else A.sum(axis=1)
        graphs.append(Graph(A, normalize_features(raw), graph_id=gi + 1, label=labels[gi]))
    return Dataset(tuple(graphs))


def write_dataset(dataset: Dataset, path, with_attributes: bool = True) -> Path:
    """Write ``dataset`` in the same TU layout that :func:`load_dataset` reads."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    edges, indicator, attrs = [], [], []
    offset = 0
    for gi, g in enumerate(dataset.graphs):
        iu, ju = np.nonzero(np.triu(g.adjacency))
        edges.extend(f"{offset + i + 1}, {offset + j + 1}" for i, j in zip(iu, ju))
        indicator.extend([str(gi + 1)] * g.dim)
        attrs.extend(repr(float(v)) for v in g.x)
        offset += g.dim
    (root / "A.txt").write_text("\n".join(edges) + ("\n" if edges else ""))
    (root / "graph_indicator.txt").write_text("\n".join(indicator) + "\n")
    (root / "graph_labels.txt").write_text("\n".join(str(g.label) for g in dataset.graphs) + "\n")
    if with_attributes:
        (root / "node_attributes.txt").write_text("\n".join(attrs) + "\n")
    return root
