"""Certified approximate unlearning for classifiers over scattering embeddings.

A removal request edits one training graph (zero a node feature, delete a
node) or drops it entirely. The model is moved with one Newton step

    w' = w + H^{-1} Delta,   Delta = grad L(w, D) - grad L(w, D'),
                             H = hess L(w, D')

and the data-dependent bound ``gamma2 F ||Z'|| ||H^{-1} Delta|| ||Z' H^{-1} Delta||``
on the gradient residual is charged to a budget. Once the accumulated bound
exceeds ``alpha * eps / sqrt(2 ln(1.5 / delta))`` the model is retrained from
scratch with fresh noise.
"""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .classifier import LOGISTIC, LossModel, ModelState, loss_grad, loss_hessian, minimize, train
from .errors import (
    BatchPreconditionError,
    ParameterError,
    StaleRequestError,
)
from .graph import Graph, remove_node, zero_feature
from .linalg import SpectralNormCache, spectral_norm
from .scattering import (
    PowerCache,
    ScatteringConfig,
    embed,
    embed_incremental,
    energy_constant,
)
from .wavelets import bank_from_powers, build_filter_bank, certified_frame_bounds

__all__ = [
    "RemovalRequest",
    "BudgetLedger",
    "UnlearnOutcome",
    "compute_delta",
    "newton_direction",
    "newton_update",
    "data_dependent_bound",
    "worst_case_bound",
    "noise_constant",
    "calibrate_noise",
    "budget_threshold",
    "Unlearner",
    "read_requests",
    "write_requests",
    "write_outcomes",
]

KINDS = ("feature", "node", "graph")


@dataclass(frozen=True)
class RemovalRequest:
    kind: str
    graph: int
    node: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"request kind must be one of {KINDS}, got {self.kind!r}")
        if (self.node is None) != (self.kind == "graph"):
            raise ParameterError("node index is required for feature/node requests and forbidden for graph requests")

    def to_json(self) -> str:
        data = {"kind": self.kind, "graph": self.graph}
        if self.node is not None:
            data["node"] = self.node
        return json.dumps(data)

    @classmethod
    def from_json(cls, line: str) -> "RemovalRequest":
        data = json.loads(line)
        return cls(data["kind"], int(data["graph"]), None if data.get("node") is None else int(data["node"]))


def read_requests(path) -> list[RemovalRequest]:
    """Parse a JSON-lines request stream; blank lines are skipped."""
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            out.append(RemovalRequest.from_json(line))
        except (ValueError, KeyError, TypeError) as exc:
            raise ParameterError(f"{path}:{lineno}: bad request ({exc})") from None
    return out


def write_requests(path, requests: Iterable[RemovalRequest]) -> Path:
    path = Path(path)
    path.write_text("".join(r.to_json() + "\n" for r in requests))
    return path


OUTCOME_FIELDS = ["step", "kind", "action", "bound", "beta", "threshold", "wall_ms", "test_acc"]


def write_outcomes(path, outcomes, test_acc=None) -> Path:
    """CSV outcome log; ``test_acc`` is an optional per-outcome accuracy list."""
    path = Path(path)
    accs = [None] * len(outcomes) if test_acc is None else list(test_acc)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(OUTCOME_FIELDS)
        for o, acc in zip(outcomes, accs):
            w.writerow([o.step, o.kind, o.action, repr(o.bound_used), repr(o.beta), repr(o.threshold),
                        repr(o.wall_time * 1e3), "" if acc is None else repr(float(acc))])
    return path


# --- closed forms ---------------------------------------------------------------------


def noise_constant(delta: float) -> float:
    """``c`` with ``delta = 1.5 exp(-c^2 / 2)``."""
    if not 0 < delta < 1.5:
        raise ParameterError(f"delta must lie in (0, 1.5), got {delta}")
    return math.sqrt(2.0 * math.log(1.5 / delta))


def calibrate_noise(epsilon: float, delta: float, residual_bound: float) -> float:
    """Noise standard deviation ``c * eps' / eps`` that makes a residual of at
    most ``eps'`` an ``(eps, delta)``-certified removal."""
    if epsilon <= 0 or residual_bound <= 0:
        raise ParameterError("epsilon and the residual bound must be positive")
    return noise_constant(delta) * residual_bound / epsilon


def budget_threshold(epsilon: float, delta: float, alpha: float) -> float:
    return alpha * epsilon / noise_constant(delta)


def compute_delta(w, z, z_new, y, loss: LossModel, lam: float, kind: str) -> np.ndarray:
    """Gradient change ``grad L(w, D) - grad L(w, D')`` caused by one sample.

    For ``kind="graph"`` the sample leaves the dataset, taking its share of the
    regularizer with it: ``lam w + grad l(w^T z, y)``. Otherwise it is replaced
    by ``z_new``: ``grad l(w^T z, y) - grad l(w^T z_new, y)``.
    """
    w = np.asarray(w, dtype=float)
    z = np.asarray(z, dtype=float)
    if kind == "graph":
        if z_new is not None:
            raise ParameterError("whole-graph removal takes no replacement embedding")
        return lam * w + loss.d1(w @ z, y) * z
    if kind not in ("feature", "node"):
        raise ParameterError(f"unknown request kind {kind!r}")
    if z_new is None:
        raise ParameterError(f"{kind} removal needs the updated embedding")
    z_new = np.asarray(z_new, dtype=float)
    return loss.d1(w @ z, y) * z - loss.d1(w @ z_new, y) * z_new


def newton_direction(w, Z_new, y_new, lam, delta, loss: LossModel) -> np.ndarray:
    """``H^{-1} Delta`` with ``H`` the Hessian on the updated data at ``w``."""
    H = loss_hessian(w, Z_new, y_new, lam, loss)
    return cho_solve(cho_factor(H), np.asarray(delta, dtype=float))


def newton_update(w, Z_new, y_new, lam, delta, loss: LossModel) -> np.ndarray:
    return np.asarray(w, dtype=float) + newton_direction(w, Z_new, y_new, lam, delta, loss)


def data_dependent_bound(Z_new, step, gamma2: float, F: float, z_norm: float | None = None) -> float:
    """``gamma2 F ||Z'|| ||step|| ||Z' step||`` where ``step = H^{-1} Delta``.

    ``z_norm`` passes a cached ``||Z'||_2``.
    """
    if gamma2 == 0:
        return 0.0
    step = np.asarray(step, dtype=float)
    s = np.linalg.norm(step)
    if s == 0:
        return 0.0
    Z_new = np.asarray(Z_new, dtype=float)
    if z_norm is None:
        z_norm = spectral_norm(Z_new)
    return float(gamma2 * F * z_norm * s * np.linalg.norm(Z_new @ step))


def worst_case_bound(
    kind: str,
    *,
    gamma1: float,
    gamma2: float,
    C1: float,
    C2: float,
    lam: float,
    n: int,
    F: float,
    g: int | None = None,
    m: int = 1,
    min_g: int | None = None,
) -> float:
    """Closed-form residual bounds.

    ``kind`` is one of ``feature_single``, ``node_single``, ``feature_batch``,
    ``node_batch``. Feature bounds need the size ``g`` of the edited graph;
    batch bounds need ``m < min_g``.
    """
    if gamma2 == 0:
        return 0.0
    if kind not in ("feature_single", "node_single", "feature_batch", "node_batch"):
        raise ParameterError(f"unknown bound kind {kind!r}")
    batch = kind.endswith("batch")
    if batch:
        if min_g is None:
            raise ParameterError("batch bounds need min_g, the smallest training graph size")
        if not m < min_g:
            raise BatchPreconditionError(
                f"m={m} removals is not below the smallest graph size {min_g}; "
                "remove the affected graphs whole first, then unlearn the remaining nodes"
            )
    else:
        m = 1
    scale = m * m * gamma2 * F**3 / (lam**2 * n)
    if kind.startswith("node"):
        return float(4.0 * C1**2 * scale)
    if g is None:
        raise ParameterError("feature bounds need the graph size g")
    stab = (gamma1 * C1 * F**2 + lam * C2 * F) ** 2 / (lam**2 * g)
    return float(scale * min(4.0 * C1**2, stab))


# --- budget ---------------------------------------------------------------------------


@dataclass
class BudgetLedger:
    epsilon: float
    delta: float
    alpha: float
    gamma2: float = 0.25
    F: float = 1.0
    beta: float = 0.0
    retrain_count: int = 0
    charges: list = field(default_factory=list)

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ParameterError("epsilon must be positive")
        noise_constant(self.delta)
        if self.alpha < 0:
            raise ParameterError("alpha must be nonnegative")
        self._key = None
        self._threshold = None

    @property
    def threshold(self) -> float:
        key = (self.epsilon, self.delta, self.alpha)
        if key != self._key:
            self._threshold = budget_threshold(*key)
            self._key = key
        return self._threshold

    def charge(self, bound: float) -> bool:
        """Add ``bound`` to ``beta``; return whether the budget is exceeded."""
        if bound < 0:
            raise ParameterError("bounds are nonnegative")
        self.beta += bound
        self.charges.append(float(bound))
        return self.beta > self.threshold

    def reset(self):
        self.beta = 0.0
        self.charges = []
        self.retrain_count += 1


@dataclass
class UnlearnOutcome:
    step: int
    kind: str
    action: str  # "newton" or "retrain"
    bound_used: float
    beta: float
    threshold: float
    wall_time: float
    residual_true: float | None = None
    worst_case: float | None = None
    stationarity: float | None = None


# --- engine ---------------------------------------------------------------------------


def _derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


class Unlearner:
    """Sequential unlearning state machine over one training set.

    Parameters
    ----------
    graphs : sequence of Graph
        Training graphs; request ``graph`` indices refer to positions here.
    labels : array-like, optional
        Class labels (default: each graph's ``label``). Labels in ``{-1, +1}``
        train one binary model; two other values are mapped to ``-1/+1`` in
        sorted order; more classes train one-versus-all models that share a
        single budget charged with the largest per-model bound.
    diagnostics : bool
        Evaluate the true gradient residual after each request. Only allowed
        with ``alpha = 0``; in private mode the residual is never computed.
    enforce_budget : bool
        Apply the retrain guard. Disabled for bound-validation runs, where
        ``alpha = 0`` would otherwise trigger a retrain on every request.
    """

    def __init__(
        self,
        graphs: Sequence[Graph],
        config: ScatteringConfig,
        *,
        labels=None,
        lam: float = 1e-3,
        alpha: float = 0.1,
        epsilon: float = 1.0,
        delta: float = 1e-4,
        loss: LossModel = LOGISTIC,
        seed: int = 0,
        F: float | None = None,
        diagnostics: bool = False,
        enforce_budget: bool = True,
        use_power_cache: bool = True,
        tol: float = 1e-8,
    ):
        if diagnostics and alpha > 0:
            raise ParameterError("true-residual diagnostics are only available with alpha = 0")
        self.config = config
        self.graphs = list(graphs)
        self.lam = float(lam)
        self.loss = loss
        self.seed = int(seed)
        self.diagnostics = diagnostics
        self.enforce_budget = enforce_budget
        self.tol = tol
        n = len(self.graphs)
        if n == 0:
            raise ParameterError("empty training set")

        raw = np.array([g.label for g in self.graphs] if labels is None else labels)
        self.classes, self.Y = _label_matrix(raw)
        self.alive = np.ones(n, dtype=bool)

        self.Z = np.empty((n, config.dim))
        self.caches: list[PowerCache | None] = []
        upper = 0.0
        for i, g in enumerate(self.graphs):
            if config.family.polynomial and use_power_cache:
                cache = PowerCache.build(g, config.family)
                bank = bank_from_powers(cache.dyadic(config.family.J), g, config.family)
            else:
                cache = None
                bank = build_filter_bank(g, config.family)
            self.caches.append(cache)
            if F is None:
                upper = max(upper, certified_frame_bounds(bank)[1])
            self.Z[i] = embed(g, config, bank=bank).values
        self.F = float(F) if F is not None else energy_constant(upper, config.layers)
        self.row_norms = np.linalg.norm(self.Z, axis=1)
        self.znorm = SpectralNormCache(self.Z)

        self.ledger = BudgetLedger(epsilon, delta, alpha, gamma2=loss.gamma2, F=self.F)
        self.models: list[ModelState] = [self._fit(k, 0) for k in range(self.Y.shape[0])]
        self.step = 0

    # -- views -------------------------------------------------------------------------

    @property
    def n(self) -> int:
        return int(self.alive.sum())

    @property
    def Z_alive(self) -> np.ndarray:
        return self.Z[self.alive]

    @property
    def weights(self) -> np.ndarray:
        return np.array([m.weights for m in self.models])

    def F_used(self) -> float:
        """Energy constant for the bounds: ``F``, raised if some current
        embedding is longer (non-uniform low-pass or higher moments)."""
        return max(self.F, float(self.row_norms[self.alive].max()))

    def gradient_residual(self, k: int = 0, include_noise: bool = False) -> float:
        m = self.models[k]
        b = m.noise if include_noise else None
        return float(np.linalg.norm(
            loss_grad(m.weights, self.Z_alive, self.Y[k, self.alive], self.lam, self.loss, b)
        ))

    def predict(self, Z) -> np.ndarray:
        """Class labels in the original label space."""
        scores = np.asarray(Z, dtype=float) @ self.weights.T
        if len(self.models) == 1:
            pos = scores[:, 0] >= 0
            return np.where(pos, self.classes[1], self.classes[0])
        return self.classes[np.argmax(scores, axis=1)]

    def accuracy(self, Z, labels) -> float:
        if len(labels) == 0:
            return float("nan")
        return float(np.mean(self.predict(Z) == np.asarray(labels)))

    # -- training ----------------------------------------------------------------------

    def _fit(self, k: int, retrain: int, w0=None) -> ModelState:
        seed = _derive_seed(self.seed, k, retrain)
        return train(
            self.Z_alive, self.Y[k, self.alive], self.lam, self.ledger.alpha, seed, self.loss,
            tol=self.tol, w0=w0,
        )

    def retrain(self):
        """Full retrain on the current data with fresh noise; resets the budget."""
        self.ledger.reset()
        self.models = [self._fit(k, self.ledger.retrain_count) for k in range(len(self.models))]

    def reoptimize(self, tol: float = 1e-13):
        """Polish every model to stationarity of its own (noisy) objective,
        keeping the noise draw. Returns the largest remaining gradient norm."""
        worst = 0.0
        for m, y in zip(self.models, self.Y):
            w, _, gnorm = minimize(self.Z_alive, y[self.alive], self.lam, self.loss, m.noise,
                                   w0=m.weights, tol=tol, max_iter=50)
            m.weights, m.grad_norm = w, gnorm
            worst = max(worst, gnorm)
        return worst

    # -- requests ----------------------------------------------------------------------

    def _validate(self, req: RemovalRequest):
        if not 0 <= req.graph < len(self.graphs):
            raise StaleRequestError(f"graph {req.graph} is not in the training set")
        if not self.alive[req.graph]:
            raise StaleRequestError(f"graph {req.graph} was already removed")
        if req.node is not None:
            g = self.graphs[req.graph]
            if not 0 <= req.node < g.dim:
                raise StaleRequestError(f"node {req.node} out of range for graph {req.graph}")
            if not g.active_mask[req.node]:
                raise StaleRequestError(f"node {req.node} of graph {req.graph} was already removed")

    def _edit(self, batch):
        """Move the data to ``D'`` and keep ``||Z||`` bookkeeping in step.
        Returns the old rows of touched graphs and the dropped set."""
        before = {}
        dropped = set()
        for req in batch:
            i = req.graph
            before.setdefault(i, self.Z[i].copy())
            if req.kind == "graph":
                self.alive[i] = False
                dropped.add(i)
            else:
                self.Z[i] = self._apply_edit(req)
        for i, z_old in before.items():
            if i in dropped:
                self.znorm.remove_row(z_old)
            else:
                self.znorm.replace_row(z_old, self.Z[i])
                self.row_norms[i] = np.linalg.norm(self.Z[i])
        return before, dropped

    def remove_and_retrain(self, requests):
        """Baseline arm: apply the edits, then retrain from scratch with fresh noise."""
        batch = [requests] if isinstance(requests, RemovalRequest) else list(requests)
        if not batch:
            raise ParameterError("empty request batch")
        self._validate_batch(batch)
        self._edit(batch)
        self.step += 1
        self.retrain()

    def _validate_batch(self, batch):
        # check the whole batch up front so a bad entry leaves the state untouched
        seen_nodes, seen_graphs = set(), set()
        for req in batch:
            self._validate(req)
            if req.graph in seen_graphs:
                raise StaleRequestError(f"graph {req.graph} is removed earlier in the same batch")
            if req.kind == "graph":
                if any(gi == req.graph for gi, _ in seen_nodes):
                    raise StaleRequestError(f"graph {req.graph} is edited and removed in the same batch")
                seen_graphs.add(req.graph)
                if len(seen_graphs) >= self.n:
                    raise ParameterError("request would remove every training graph")
            elif req.kind == "node":
                if (req.graph, req.node) in seen_nodes:
                    raise StaleRequestError(f"node {req.node} of graph {req.graph} is removed twice")
                seen_nodes.add((req.graph, req.node))
                if len({n for gi, n in seen_nodes if gi == req.graph}) >= self.graphs[req.graph].node_count:
                    raise StaleRequestError(f"batch removes every node of graph {req.graph}")

    def _apply_edit(self, req: RemovalRequest):
        """Apply a feature/node edit; returns the new embedding row."""
        i = req.graph
        g = self.graphs[i]
        cache = self.caches[i]
        fam = self.config.family
        if req.kind == "feature":
            new_g = zero_feature(g, req.node)
            bank = bank_from_powers(cache.dyadic(fam.J), g, fam) if cache is not None else None
            z = embed(new_g, self.config, bank=bank).values
        else:
            new_g = remove_node(g, req.node, mode="masked")
            if cache is not None:
                emb, cache = embed_incremental(g, req.node, cache, self.config)
                z = emb.values
                self.caches[i] = cache
            else:
                z = embed(new_g, self.config).values
        self.graphs[i] = new_g
        return z

    def process(self, requests) -> UnlearnOutcome:
        """Serve one request, or a batch as a single Newton step."""
        batch = [requests] if isinstance(requests, RemovalRequest) else list(requests)
        if not batch:
            raise ParameterError("empty request batch")
        t0 = time.perf_counter()
        stationarity = None
        if self.diagnostics:
            stationarity = max(self.gradient_residual(k) for k in range(len(self.models)))

        self._validate_batch(batch)
        sizes = {r.graph: self.graphs[r.graph].node_count for r in batch}
        min_g = min(self.graphs[i].node_count for i in np.flatnonzero(self.alive))
        before, dropped = self._edit(batch)

        lam = self.lam
        deltas = []
        for k, m in enumerate(self.models):
            delta = np.zeros_like(m.weights)
            for i, z_old in before.items():
                y = self.Y[k, i]
                if i in dropped:
                    delta += compute_delta(m.weights, z_old, None, y, self.loss, lam, "graph")
                else:
                    delta += compute_delta(m.weights, z_old, self.Z[i], y, self.loss, lam, "node")
            deltas.append(delta)

        Zp = self.Z_alive
        z_norm = self.znorm.norm()
        F = self.F_used()
        steps, bounds = [], []
        for k, m in enumerate(self.models):
            step = newton_direction(m.weights, Zp, self.Y[k, self.alive], lam, deltas[k], self.loss)
            steps.append(step)
            bounds.append(data_dependent_bound(Zp, step, self.loss.gamma2, F, z_norm=z_norm))
        bound = max(bounds)

        self.step += 1
        tripped = self.ledger.charge(bound)
        if tripped and self.enforce_budget:
            self.retrain()
            action = "retrain"
        else:
            for m, step in zip(self.models, steps):
                m.weights = m.weights + step
            action = "newton"
        beta = self.ledger.beta
        wall = time.perf_counter() - t0

        residual = worst = None
        if self.diagnostics:
            residual = max(self.gradient_residual(k) for k in range(len(self.models)))
            worst = self._worst_case(batch, F, sizes, min_g)
        kind = batch[0].kind if len({r.kind for r in batch}) == 1 else "mixed"
        return UnlearnOutcome(
            self.step, kind, action, bound, beta, self.ledger.threshold, wall,
            residual_true=residual, worst_case=worst, stationarity=stationarity,
        )

    def _worst_case(self, batch, F: float, sizes: dict, min_g: int):
        kinds = {r.kind for r in batch}
        if "graph" in kinds or len(kinds) != 1:
            return None
        L = self.loss
        # |grad l| <= |l'| ||z|| <= C2 F, so C1 = 1 alone presumes ||z|| <= 1
        C1 = max(L.C1, L.C2 * F)
        m = len(batch)
        common = dict(gamma1=L.gamma1, gamma2=L.gamma2, C1=C1, C2=L.C2, lam=self.lam, n=self.n, F=F)
        kind = next(iter(kinds))
        if m == 1:
            g = sizes[batch[0].graph]
            if kind == "feature":
                return worst_case_bound("feature_single", g=g, **common)
            return worst_case_bound("node_single", **common)
        g = min(sizes[r.graph] for r in batch)
        try:
            return worst_case_bound(f"{kind}_batch", g=g, m=m, min_g=min_g, **common)
        except BatchPreconditionError:
            return None


def _label_matrix(raw: np.ndarray):
    """Map raw labels to a ``(K, n)`` matrix of +-1 targets and the class list."""
    values = np.unique(raw)
    if set(values.tolist()) <= {-1, 1}:
        return np.array([-1, 1]), raw.astype(float)[None, :]
    if values.size == 1:
        raise ParameterError("training labels contain a single class")
    if values.size == 2:
        return values, np.where(raw == values[1], 1.0, -1.0)[None, :]
    return values, np.array([np.where(raw == c, 1.0, -1.0) for c in values])
