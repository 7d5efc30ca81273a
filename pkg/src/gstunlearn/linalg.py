"""Small numerical helpers: an instrumented matrix product and a warm-started
spectral-norm estimator."""
from __future__ import annotations

import numpy as np


class FlopCounter:
    """Tallies floating point work of the products routed through :func:`mm`.

    A product of an ``m x k`` by ``k x n`` operand counts ``2 m k n``.
    Elementwise passes are added explicitly with :meth:`add`.
    """

    def __init__(self):
        self.flops = 0

    def add(self, count):
        self.flops += int(count)

    def reset(self):
        self.flops = 0

    def __repr__(self):
        return f"FlopCounter(flops={self.flops})"


def mm(a: np.ndarray, b: np.ndarray, counter: FlopCounter | None = None) -> np.ndarray:
    out = a @ b
    if counter is not None:
        m = a.shape[0] if a.ndim > 1 else 1
        k = a.shape[-1]
        n = b.shape[1] if b.ndim > 1 else 1
        counter.add(2 * m * k * n)
    return out


class SpectralNormCache:
    """Tracks ``||Z||_2`` for a data matrix whose rows change one at a time.

    The Gram matrix ``Z^T Z`` is kept up to date with rank-one corrections when
    rows change, and the top eigenvalue is refreshed by
    power iteration warm-started from the previous eigenvector.
    """

    def __init__(self, Z: np.ndarray, tol: float = 1e-6, max_iter: int = 1000, seed: int = 0):
        Z = np.asarray(Z, dtype=float)
        self.gram = Z.T @ Z
        self.tol = tol
        self.max_iter = max_iter
        v = np.random.default_rng(seed).standard_normal(Z.shape[1])
        self._v = v / np.linalg.norm(v)
        self._value = None

    def replace_row(self, old: np.ndarray, new: np.ndarray):
        self.gram += np.outer(new, new) - np.outer(old, old)
        self._value = None

    def remove_row(self, old: np.ndarray):
        self.gram -= np.outer(old, old)
        self._value = None

    def norm(self) -> float:
        if self._value is None:
            self._value = self._refresh()
        return self._value

    def _refresh(self) -> float:
        G = self.gram
        v = self._v
        rho = float(v @ G @ v)
        for _ in range(self.max_iter):
            u = G @ v
            nu = np.linalg.norm(u)
            if nu == 0.0:
                return 0.0
            v = u / nu
            rho_new = float(v @ G @ v)
            if abs(rho_new - rho) <= self.tol * max(rho_new, 1e-300):
                rho = rho_new
                break
            rho = rho_new
        else:
            # no convergence (tiny spectral gap): fall back to a dense solve
            w, V = np.linalg.eigh(G)
            rho, v = float(w[-1]), V[:, -1]
        self._v = v
        # power iteration approaches from below; pad by the tolerance
        return float(np.sqrt(max(rho, 0.0)) * (1.0 + self.tol))


def spectral_norm(Z: np.ndarray, tol: float = 1e-6) -> float:
    """One-shot ``||Z||_2`` through :class:`SpectralNormCache`."""
    Z = np.asarray(Z, dtype=float)
    if Z.size == 0:
        return 0.0
    return SpectralNormCache(Z, tol=tol).norm()
