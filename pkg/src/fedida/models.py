"""From-scratch predictors: a linear scorer and a one-hidden-layer ReLU network.

Parameters are immutable values; every update returns a new :class:`ModelParams`.
Both kinds expose the same small surface (forward, loss_and_grad, backward),
which is all the federated engine and the fairness penalty need.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

LINEAR = "linear"
FCNN = "fcnn"
HIDDEN_UNITS = 100


@dataclass(frozen=True)
class ModelParams:
    """Weights and biases.

    linear: ``weights = (w,)`` with ``w`` of shape (p,), ``biases = (b,)`` shape (1,).
    fcnn:   ``weights = (W1, W2)`` of shapes (h, p) and (1, h), ``biases = (b1, b2)``.
    """

    kind: str
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    @property
    def arrays(self) -> tuple[np.ndarray, ...]:
        return self.weights + self.biases

    @property
    def p(self) -> int:
        return self.weights[0].shape[-1]

    def to_vector(self) -> np.ndarray:
        return np.concatenate([x.ravel() for x in self.arrays])

    def with_vector(self, vec: np.ndarray) -> ModelParams:
        vec = np.asarray(vec, dtype=np.float64)
        out, pos = [], 0
        for x in self.arrays:
            out.append(vec[pos : pos + x.size].reshape(x.shape).copy())
            pos += x.size
        if pos != vec.size:
            raise ValueError(f"vector of length {vec.size} does not fit params of size {pos}")
        k = len(self.weights)
        return ModelParams(self.kind, tuple(out[:k]), tuple(out[k:]))

    def weight_sq_norm(self) -> float:
        return float(sum(np.dot(w.ravel(), w.ravel()) for w in self.weights))

    def zeros_like(self) -> ModelParams:
        return self.with_vector(np.zeros(self.to_vector().size))

    def checksum(self) -> str:
        return hashlib.sha256(self.to_vector().tobytes()).hexdigest()[:16]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d: dict) -> ModelParams:
        return cls(
            d["kind"],
            tuple(np.asarray(w, dtype=np.float64) for w in d["weights"]),
            tuple(np.asarray(b, dtype=np.float64) for b in d["biases"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> ModelParams:
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class BatchScores:
    logits: np.ndarray
    probs: np.ndarray


def init_params(kind: str, p: int, seed: int = 0, hidden: int = HIDDEN_UNITS) -> ModelParams:
    """Linear models start at zero; the network uses U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    if kind == LINEAR:
        return ModelParams(LINEAR, (np.zeros(p),), (np.zeros(1),))
    if kind == FCNN:
        rng = np.random.default_rng(seed)
        lim1, lim2 = 1.0 / np.sqrt(max(p, 1)), 1.0 / np.sqrt(hidden)
        return ModelParams(
            FCNN,
            (rng.uniform(-lim1, lim1, (hidden, p)), rng.uniform(-lim2, lim2, (1, hidden))),
            (rng.uniform(-lim1, lim1, hidden), rng.uniform(-lim2, lim2, 1)),
        )
    raise ValueError(f"unknown model kind {kind!r}")


def _check_input(params: ModelParams, a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != params.p:
        raise ValueError(f"expected input with {params.p} columns, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise ValueError("input contains non-finite values")
    return a


def logits(params: ModelParams, a: np.ndarray) -> np.ndarray:
    if params.kind == LINEAR:
        return a @ params.weights[0] + params.biases[0][0]
    W1, W2 = params.weights
    b1, b2 = params.biases
    hidden = np.maximum(a @ W1.T + b1, 0.0)
    return hidden @ W2[0] + b2[0]


def forward(params: ModelParams, a: np.ndarray) -> BatchScores:
    a = _check_input(params, a)
    z = logits(params, a)
    return BatchScores(z, expit(z))


def backward(params: ModelParams, a: np.ndarray, dlogits: np.ndarray) -> ModelParams:
    """Gradient of ``sum(dlogits * logits(params, a))`` with respect to the parameters."""
    if params.kind == LINEAR:
        return ModelParams(LINEAR, (a.T @ dlogits,), (np.array([dlogits.sum()]),))
    W1, W2 = params.weights
    b1, _ = params.biases
    pre = a @ W1.T + b1
    hidden = np.maximum(pre, 0.0)
    dW2 = (dlogits @ hidden)[None, :]
    dhidden = np.outer(dlogits, W2[0]) * (pre > 0)
    return ModelParams(FCNN, (dhidden.T @ a, dW2), (dhidden.sum(axis=0), np.array([dlogits.sum()])))


def bce_loss(z: np.ndarray, y: np.ndarray) -> float:
    """Mean binary cross-entropy from logits, stable for large |z|."""
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def loss_and_grad(params: ModelParams, a: np.ndarray, y: np.ndarray) -> tuple[float, ModelParams]:
    a = _check_input(params, a)
    y = np.asarray(y, dtype=np.float64)
    if len(y) == 0:
        raise ValueError("empty batch")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("labels must be 0 or 1")
    z = logits(params, a)
    return bce_loss(z, y), backward(params, a, (expit(z) - y) / len(y))


def add_scaled(params: ModelParams, other: ModelParams, scale: float) -> ModelParams:
    return ModelParams(
        params.kind,
        tuple(x + scale * g for x, g in zip(params.weights, other.weights)),
        tuple(x + scale * g for x, g in zip(params.biases, other.biases)),
    )


def apply_update(params: ModelParams, grad: ModelParams, lr: float) -> ModelParams:
    if [x.shape for x in params.arrays] != [g.shape for g in grad.arrays]:
        raise ValueError("gradient shapes do not match parameter shapes")
    return add_scaled(params, grad, -lr)
