"""Graph wavelet kernels and per-graph filter banks.

Four families are supported:

``monic_cubic`` and ``itersine``
    Spectral kernels evaluated on the eigenvalues of the normalized Laplacian
    ``I - D^{-1/2} A D^{-1/2}`` (spectrum in ``[0, 2]``). These need an
    eigendecomposition and are the slow path.
``diffusion`` and ``geometric``
    Dyadic differences of a lazy operator, ``H_0 = I - T`` and
    ``H_j = T^{2^{j-1}} - T^{2^j}``. Diffusion uses
    ``T = (I + D^{-1/2} A D^{-1/2}) / 2``, geometric uses the lazy random walk
    ``T = (I + A D^{-1}) / 2``. Both are built from matrix powers only.

Degree-zero nodes are treated as carrying a unit self-loop in the normalized
adjacency, so an isolated node is a fixed point of the lazy operator
(``T[k, k] = 1``) and every wavelet vanishes on it.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .graph import Graph
from .linalg import FlopCounter, mm

__all__ = [
    "FAMILIES",
    "WaveletFamily",
    "FilterBank",
    "monic_cubic_kernel",
    "itersine_kernel",
    "eval_kernel",
    "lazy_operator",
    "normalized_laplacian",
    "low_pass",
    "build_filter_bank",
    "bank_from_powers",
    "estimate_frame_bounds",
    "certified_frame_bounds",
]

FAMILIES = ("monic_cubic", "itersine", "diffusion", "geometric")
POLYNOMIAL = ("diffusion", "geometric")


@dataclass(frozen=True)
class WaveletFamily:
    tag: str = "geometric"
    J: int = 3
    Q: int = 1

    def __post_init__(self):
        if self.tag not in FAMILIES:
            raise ParameterError(f"unknown wavelet family {self.tag!r}; choose from {FAMILIES}")
        if self.J < 1 or self.Q < 1:
            raise ParameterError(f"J and Q must be >= 1, got J={self.J}, Q={self.Q}")
        if self.Q > 1 and self.tag != "geometric":
            raise ParameterError("moments (Q > 1) are only defined for geometric wavelets")

    @property
    def polynomial(self) -> bool:
        return self.tag in POLYNOMIAL

    @property
    def n_filters(self) -> int:
        """Branching factor of the scattering tree."""
        return self.J + 1 if self.polynomial else self.J

    @property
    def max_power(self) -> int:
        """Highest power of the lazy operator the filters use."""
        if not self.polynomial:
            raise ParameterError(f"{self.tag} is not a polynomial family")
        return 2 ** self.J


@dataclass(frozen=True, eq=False)
class FilterBank:
    filters: np.ndarray  # (n_filters, g, g)
    low_pass: np.ndarray  # (g,)
    family: WaveletFamily
    active: np.ndarray  # (g,) bool
    frame_lower: float | None = None
    frame_upper: float | None = None

    @property
    def size(self) -> int:
        return self.filters.shape[1]

    def with_frame_bounds(self, lower: float, upper: float) -> "FilterBank":
        return dataclasses.replace(self, frame_lower=float(lower), frame_upper=float(upper))


# --- kernels --------------------------------------------------------------------------


def monic_cubic_kernel(lam):
    """Base monic cubic kernel: linear below 1, decaying as ``2/lam`` above 2,
with a cubic joining the two pieces on ``[1, 2]``."""
    lam = np.asarray(lam, dtype=float)
    cubic = -5.0 + 11.0 * lam - 6.0 * lam**2 + lam**3
    tail = 2.0 / np.where(lam > 2, lam, 1.0)
    out = np.where(lam < 1, lam, np.where(lam <= 2, cubic, tail))
    return out if out.ndim else float(out)


def itersine_kernel(j: int, lam):
    """Itersine kernel at scale ``j``; supported on ``[j/2 - 1, j/2]``."""
    lam = np.asarray(lam, dtype=float)
    val = np.sin(0.5 * np.pi * np.cos(np.pi * (lam - (j - 1) / 2.0)) ** 2)
    out = np.where((lam >= j / 2.0 - 1.0) & (lam <= j / 2.0), val, 0.0)
    return out if out.ndim else float(out)


def _itersine_argument(family: WaveletFamily, lam):
    # [0, 2] -> [0, (J-1)/2], the stretch where the squared kernels sum to one
    return np.clip(np.asarray(lam, dtype=float), 0.0, 2.0) * (family.J - 1) / 4.0


def eval_kernel(family: WaveletFamily, j: int, lam):
    """Scale-``j`` kernel of ``family`` at spectral value ``lam``.

    For the spectral families ``lam`` is a normalized-Laplacian eigenvalue;
    monic cubic scale ``j`` is the base kernel at ``2^(J-j) * lam`` (so scale
    ``J`` is the base kernel itself) and itersine maps ``[0, 2]`` linearly onto
    ``[0, (J-1)/2]``. For the polynomial families ``lam`` is an eigenvalue of
    the lazy operator and ``j`` runs over ``0..J``.
    """
    lo = 0 if family.polynomial else 1
    if not lo <= j <= family.J:
        raise ParameterError(f"scale {j} outside [{lo}, {family.J}] for {family.tag}")
    if family.tag == "monic_cubic":
        return monic_cubic_kernel(2.0 ** (family.J - j) * np.asarray(lam, dtype=float))
    if family.tag == "itersine":
        return itersine_kernel(j, _itersine_argument(family, lam))
    lam = np.asarray(lam, dtype=float)
    out = 1.0 - lam if j == 0 else lam ** (2 ** (j - 1)) - lam ** (2**j)
    return out if np.ndim(out) else float(out)


# --- operators ------------------------------------------------------------------------


def _normalized_adjacency(graph: Graph, symmetric: bool, counter: FlopCounter | None = None):
    A = graph.adjacency
    d = A.sum(axis=1)
    isolated = d == 0
    inv = np.where(isolated, 0.0, 1.0 / np.where(isolated, 1.0, d))
    if symmetric:
        s = np.sqrt(inv)
        N = s[:, None] * A * s[None, :]
    else:
        N = A * inv[None, :]
    N[isolated, isolated] = 1.0
    if counter is not None:
        counter.add(3 * A.size)
    return N


def lazy_operator(graph: Graph, tag: str, counter: FlopCounter | None = None) -> np.ndarray:
    """``(I + N) / 2`` with ``N`` the symmetric (diffusion) or random-walk
    (geometric) normalized adjacency."""
    if tag not in POLYNOMIAL:
        raise ParameterError(f"{tag} has no lazy operator")
    N = _normalized_adjacency(graph, symmetric=(tag == "diffusion"), counter=counter)
    T = 0.5 * (np.eye(graph.dim) + N)
    if counter is not None:
        counter.add(2 * N.size)
    return T


def normalized_laplacian(graph: Graph) -> np.ndarray:
    return np.eye(graph.dim) - _normalized_adjacency(graph, symmetric=True)


def low_pass(graph: Graph, family: WaveletFamily) -> np.ndarray:
    """Averaging vector ``U``: ``d / ||d||_1`` for diffusion, else uniform over
    active nodes. Diffusion falls back to uniform on edgeless graphs."""
    mask = graph.active_mask.astype(float)
    if family.tag == "diffusion":
        d = graph.degrees
        total = d.sum()
        if total > 0:
            return d / total
    return mask / mask.sum()


# --- banks ----------------------------------------------------------------------------


def bank_from_powers(
    dyadic: dict, graph: Graph, family: WaveletFamily, counter: FlopCounter | None = None
) -> FilterBank:
    """Assemble dyadic-difference filters from ``{k: T^k}`` for ``k = 1, 2, 4, ..., 2^J``."""
    g = graph.dim
    filters = np.empty((family.J + 1, g, g))
    filters[0] = np.eye(g) - dyadic[1]
    for j in range(1, family.J + 1):
        filters[j] = dyadic[2 ** (j - 1)] - dyadic[2**j]
    if counter is not None:
        counter.add((family.J + 1) * g * g)
    return FilterBank(filters, low_pass(graph, family), family, graph.active_mask.copy())


def build_filter_bank(
    graph: Graph, family: WaveletFamily, counter: FlopCounter | None = None
) -> FilterBank:
    """Materialize the filter matrices of ``family`` on ``graph``.

    Polynomial families return ``J + 1`` matrices (scales ``0..J``) built by
    repeated squaring; spectral families return ``J`` matrices.
    """
    if family.polynomial:
        T = lazy_operator(graph, family.tag, counter)
        dyadic = {1: T}
        P = T
        for j in range(1, family.J + 1):
            P = mm(P, P, counter)
            dyadic[2**j] = P
        return bank_from_powers(dyadic, graph, family, counter)

    lam, V = np.linalg.eigh(normalized_laplacian(graph))
    filters = np.empty((family.J, graph.dim, graph.dim))
    for j in range(1, family.J + 1):
        h = np.asarray(eval_kernel(family, j, lam), dtype=float).reshape(-1)
        filters[j - 1] = (V * h[None, :]) @ V.T
    return FilterBank(filters, low_pass(graph, family), family, graph.active_mask.copy())


def _frame_energy(bank: FilterBank, X: np.ndarray) -> np.ndarray:
    # X: (g, k) columns; returns sum_j ||H_j x||^2 per column
    Y = np.einsum("jab,bk->jak", bank.filters, X, optimize=True)
    return (Y**2).sum(axis=(0, 1))


def estimate_frame_bounds(bank: FilterBank, trials: int = 256, seed: int = 0) -> tuple[float, float]:
    """Empirical ``(A, B)``: min and max of ``sqrt(sum_j ||H_j x||^2)`` over
    random unit signals supported on the active nodes."""
    if trials < 1:
        raise ParameterError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    X = np.zeros((bank.size, trials))
    idx = np.flatnonzero(bank.active)
    X[idx] = rng.standard_normal((idx.size, trials))
    X /= np.linalg.norm(X, axis=0, keepdims=True)
    ratio = np.sqrt(_frame_energy(bank, X))
    return float(ratio.min()), float(ratio.max())


def certified_frame_bounds(bank: FilterBank) -> tuple[float, float]:
    """Exact ``(A, B)`` from the extreme singular values of the stacked filter
    matrix restricted to the active nodes."""
    idx = np.flatnonzero(bank.active)
    stacked = bank.filters[:, :, idx].reshape(-1, idx.size)
    s = np.linalg.svd(stacked, compute_uv=False)
    return float(s.min()), float(s.max())
