"""Strongly convex linear classifier with loss perturbation.

The objective over ``n`` embeddings ``z_i`` is::

    L_b(w) = sum_i [ l(w^T z_i, y_i) + lam/2 ||w||^2 ] + b^T w

so the regularizer contributes ``lam * n * w`` to the gradient and the
objective is ``lam * n``-strongly convex. ``b ~ N(0, alpha^2)^d`` masks the
gradient residual left behind by approximate unlearning.

The linear-regression loss is ``(w^T z - y)^2`` with no 1/2 factor, so its
Hessian is ``2 Z^T Z + lam n I``.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import expit

from .errors import LabelError, ParameterError

log = logging.getLogger(__name__)

__all__ = [
    "LossModel",
    "LOGISTIC",
    "LINEAR",
    "ModelState",
    "loss_value",
    "loss_grad",
    "loss_hessian",
    "train",
    "minimize",
    "predict",
    "predict_ovr",
]

SNAPSHOT_VERSION = 1


@dataclass(frozen=True)
class LossModel:
    """Loss ``l(s, y)`` of the score ``s = w^T z`` plus the constants the
    residual bounds need: ``|grad l| <= C1``, ``|l'| <= C2``, ``l'`` is
    ``gamma1``-Lipschitz and ``l''`` is ``gamma2``-Lipschitz."""

    kind: str
    C1: float
    C2: float
    gamma1: float
    gamma2: float

    def value(self, s, y):
        if self.kind == "logistic":
            return np.logaddexp(0.0, -y * s)
        return (s - y) ** 2

    def d1(self, s, y):
        if self.kind == "logistic":
            return y * (expit(y * s) - 1.0)
        return 2.0 * (s - y)

    def d2(self, s, y):
        if self.kind == "logistic":
            p = expit(y * s)
            return p * (1.0 - p)
        return np.full(np.shape(s), 2.0)

    @classmethod
    def named(cls, kind: str) -> "LossModel":
        try:
            return {"logistic": LOGISTIC, "linear": LINEAR}[kind]
        except KeyError:
            raise ParameterError(f"unknown loss {kind!r}") from None


LOGISTIC = LossModel("logistic", C1=1.0, C2=1.0, gamma1=0.25, gamma2=0.25)
# l' = 2(s - y) is unbounded; only gamma2 = 0 matters since it zeroes every bound
LINEAR = LossModel("linear", C1=float("inf"), C2=float("inf"), gamma1=2.0, gamma2=0.0)


def _check_shapes(w, Z, y):
    if Z.ndim != 2 or Z.shape[1] != w.shape[0] or Z.shape[0] != y.shape[0]:
        raise ParameterError(
            f"shape mismatch: w {w.shape}, Z {Z.shape}, y {y.shape}"
        )


def loss_value(w, Z, y, lam, loss: LossModel, b=None) -> float:
    w, Z, y = np.asarray(w, float), np.asarray(Z, float), np.asarray(y, float)
    _check_shapes(w, Z, y)
    n = Z.shape[0]
    val = loss.value(Z @ w, y).sum() + 0.5 * lam * n * (w @ w)
    if b is not None:
        val += b @ w
    return float(val)


def loss_grad(w, Z, y, lam, loss: LossModel, b=None) -> np.ndarray:
    """``sum_i l'(w^T z_i, y_i) z_i + lam n w``, plus ``b`` when given."""
    w, Z, y = np.asarray(w, float), np.asarray(Z, float), np.asarray(y, float)
    _check_shapes(w, Z, y)
    grad = Z.T @ loss.d1(Z @ w, y) + lam * Z.shape[0] * w
    if b is not None:
        grad = grad + b
    return grad


def loss_hessian(w, Z, y, lam, loss: LossModel) -> np.ndarray:
    """``Z^T D_w Z + lam n I`` with ``(D_w)_ii = l''(w^T z_i, y_i)``."""
    w, Z, y = np.asarray(w, float), np.asarray(Z, float), np.asarray(y, float)
    _check_shapes(w, Z, y)
    dw = loss.d2(Z @ w, y)
    H = (Z * dw[:, None]).T @ Z
    H[np.diag_indices_from(H)] += lam * Z.shape[0]
    return H


@dataclass
class ModelState:
    weights: np.ndarray
    lam: float
    noise: np.ndarray
    alpha: float
    seed: int
    loss: LossModel
    n_iter: int = 0
    grad_norm: float = 0.0
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "version": SNAPSHOT_VERSION,
            "weights": [float(v) for v in self.weights],
            "lambda": float(self.lam),
            "noise": [float(v) for v in self.noise],
            "alpha": float(self.alpha),
            "seed": int(self.seed),
            "loss": self.loss.kind,
            "n_iter": int(self.n_iter),
            "grad_norm": float(self.grad_norm),
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelState":
        if data.get("version") != SNAPSHOT_VERSION:
            raise ParameterError(f"unsupported snapshot version {data.get('version')!r}")
        return cls(
            weights=np.asarray(data["weights"], dtype=float),
            lam=float(data["lambda"]),
            noise=np.asarray(data["noise"], dtype=float),
            alpha=float(data["alpha"]),
            seed=int(data["seed"]),
            loss=LossModel.named(data["loss"]),
            n_iter=int(data.get("n_iter", 0)),
            grad_norm=float(data.get("grad_norm", 0.0)),
            meta=dict(data.get("meta", {})),
        )

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2))
        return path

    @classmethod
    def load(cls, path) -> "ModelState":
        return cls.from_dict(json.loads(Path(path).read_text()))


def check_binary_labels(y) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1 or not np.all(np.isin(y, (-1, 1))):
        raise LabelError("binary labels must be -1 or +1 (use the one-versus-all wrapper for multiclass)")
    return y.astype(float)


def train(
    Z,
    y,
    lam: float,
    alpha: float = 0.0,
    seed: int = 0,
    loss: LossModel = LOGISTIC,
    tol: float = 1e-8,
    max_iter: int = 100,
    w0=None,
) -> ModelState:
    """Minimize the noise-perturbed objective with damped Newton steps.

    Draws ``b = alpha * N(0, I)`` from ``numpy.random.default_rng(seed)`` and
    iterates until ``||grad L_b|| <= tol``.
    """
    if not lam > 0:
        raise ParameterError(f"lambda must be positive, got {lam}")
    if alpha < 0:
        raise ParameterError(f"alpha must be nonnegative, got {alpha}")
    Z = np.asarray(Z, dtype=float)
    y = check_binary_labels(y)
    d = Z.shape[1]
    rng = np.random.default_rng(seed)
    b = alpha * rng.standard_normal(d) if alpha > 0 else np.zeros(d)

    w, it, gnorm = minimize(Z, y, lam, loss, b, w0=w0, tol=tol, max_iter=max_iter)
    return ModelState(w, float(lam), b, float(alpha), int(seed), loss, n_iter=it, grad_norm=gnorm)


def minimize(Z, y, lam, loss: LossModel, b=None, w0=None, tol: float = 1e-8, max_iter: int = 100):
    """Damped Newton on ``L_b``; returns ``(w, steps, final gradient norm)``."""
    d = Z.shape[1]
    b = np.zeros(d) if b is None else b
    w = np.zeros(d) if w0 is None else np.array(w0, dtype=float)
    f = loss_value(w, Z, y, lam, loss, b)
    grad = loss_grad(w, Z, y, lam, loss, b)
    it = 0
    while np.linalg.norm(grad) > tol and it < max_iter:
        H = loss_hessian(w, Z, y, lam, loss)
        step = -cho_solve(cho_factor(H), grad)
        slope = grad @ step
        t = 1.0
        while True:
            w_try = w + t * step
            f_try = loss_value(w_try, Z, y, lam, loss, b)
            if f_try <= f + 1e-4 * t * slope or t < 1e-10:
                break
            if t == 1.0 and abs(f_try - f) <= 1e-12 * max(1.0, abs(f)):
                # objective flat to rounding: judge the full step by its gradient
                if np.linalg.norm(loss_grad(w_try, Z, y, lam, loss, b)) < np.linalg.norm(grad):
                    break
            t *= 0.5
        grad_try = loss_grad(w_try, Z, y, lam, loss, b)
        it += 1
        if t < 1e-10 and np.linalg.norm(grad_try) >= np.linalg.norm(grad):
            break  # stalled at rounding level
        w, f, grad = w_try, f_try, grad_try
    gnorm = float(np.linalg.norm(grad))
    if gnorm > tol:
        log.warning("Newton stopped at gradient norm %.3e > tol %.1e after %d steps", gnorm, tol, it)
    return w, it, gnorm


def predict(w, z):
    """Score ``w^T z`` and its sign, with ties going to ``+1``."""
    score = np.asarray(z, dtype=float) @ np.asarray(w, dtype=float)
    label = np.where(score >= 0, 1, -1)
    if np.ndim(score) == 0:
        return float(score), int(label)
    return score, label


def predict_ovr(W, z):
    """One-versus-all: index of the largest class score, lowest index on ties."""
    scores = np.asarray(z, dtype=float) @ np.asarray(W, dtype=float).T
    return np.argmax(scores, axis=-1)
