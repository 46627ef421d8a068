"""Cross-group fairness regularizer and the composite local objective.

The penalty compares scores of same-label samples that sit in different
sensitive groups. Three variants are available:

``signed-ordered``
    The plain signed sum over ordered group pairs. Its terms are antisymmetric
    so it is identically zero; kept for fidelity checks.
``absolute-pair`` (default)
    ``sum_{k<k'} sum_{i in k, j in k', y_i = y_j} |s_i - s_j|`` divided by
    ``sum_{k<k'} n_k n_k'``. Convex in the weights of a linear scorer.
``squared-group-mean``
    For each unordered group pair the mean signed same-label difference
    ``m_kk' = sum d (s_i - s_j) / (n_k n_k')`` is squared and weighted by the
    pair's share ``n_k n_k' / sum n_k n_k'``.

Scores are ``a @ w`` for linear models (bias excluded) and output logits for
the network. Pairs are always taken inside the batch that is passed in.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import models
from .models import ModelParams

logger = logging.getLogger(__name__)

SIGNED = "signed-ordered"
ABSOLUTE = "absolute-pair"
SQUARED = "squared-group-mean"
MODES = (SIGNED, ABSOLUTE, SQUARED)


@dataclass(frozen=True)
class PenaltyConfig:
    mode: str = ABSOLUTE
    lam: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown penalty mode {self.mode!r}")
        for name in ("lam", "gamma"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{'lambda' if name == 'lam' else name} must be finite and >= 0, got {v}")

    def to_dict(self) -> dict:
        return {"mode": self.mode, "lambda": self.lam, "gamma": self.gamma}

    @classmethod
    def from_dict(cls, d: dict) -> PenaltyConfig:
        return cls(mode=d.get("mode", ABSOLUTE), lam=float(d.get("lambda", 0.0)), gamma=float(d.get("gamma", 0.0)))


@dataclass(frozen=True)
class PenaltyValue:
    value: float
    pair_count: int
    normalizer: float


def _abs_pair_sum(x: np.ndarray) -> tuple[float, np.ndarray]:
    """``sum_{i<j} |x_i - x_j|`` and its gradient (#smaller - #larger) via sorting."""
    m = len(x)
    if m < 2:
        return 0.0, np.zeros(m)
    xs = np.sort(x)
    total = float(np.dot(xs, 2.0 * np.arange(m) - m + 1))
    below = np.searchsorted(xs, x, side="left")
    above = m - np.searchsorted(xs, x, side="right")
    return total, (below - above).astype(np.float64)


def _group_counts(groups: np.ndarray, y: np.ndarray, G: int) -> tuple[np.ndarray, np.ndarray]:
    n = np.bincount(groups, minlength=G).astype(np.float64)
    ny = np.stack([np.bincount(groups[y == c], minlength=G) for c in (0, 1)], axis=1).astype(np.float64)
    return n, ny


def penalty_from_scores(scores: np.ndarray, y: np.ndarray, groups: np.ndarray,
                        mode: str = ABSOLUTE) -> tuple[PenaltyValue, np.ndarray]:
    """Penalty value and its gradient with respect to each score.

    ``groups`` holds one integer group id per row (any labelling of the
    sensitive combinations). Kinks of the absolute variant use sign(0) = 0.
    """
    scores = np.asarray(scores, dtype=np.float64)
    y = np.asarray(y).astype(np.int64)
    _, groups = np.unique(np.asarray(groups), return_inverse=True)
    groups = groups.reshape(-1)
    G = int(groups.max()) + 1 if len(groups) else 0
    if G < 2:
        logger.debug("penalty on a single-group batch is 0")
        return PenaltyValue(0.0, 0, 0.0), np.zeros_like(scores)

    n, ny = _group_counts(groups, y, G)
    unordered = float((n.sum() ** 2 - np.dot(n, n)) / 2.0)
    same_label = float(sum((ny[:, c].sum() ** 2 - np.dot(ny[:, c], ny[:, c])) / 2.0 for c in (0, 1)))

    if mode == ABSOLUTE:
        total, grad = 0.0, np.zeros_like(scores)
        for c in (0, 1):
            rows = np.flatnonzero(y == c)
            t, g = _abs_pair_sum(scores[rows])
            total += t
            grad[rows] += g
            for k in range(G):
                sub = rows[groups[rows] == k]
                t, g = _abs_pair_sum(scores[sub])
                total -= t
                grad[sub] -= g
        return PenaltyValue(total / unordered, int(same_label), unordered), grad / unordered

    # per-(group, label) score sums; D[k, k'] = sum over same-label pairs of (s_i - s_j)
    S = np.zeros((G, 2))
    np.add.at(S, (groups, y), scores)
    D = S @ ny.T - ny @ S.T
    if mode == SIGNED:
        ordered = 2.0 * unordered
        return PenaltyValue(float(D.sum()) / ordered, int(2 * same_label), ordered), np.zeros_like(scores)
    if mode == SQUARED:
        M = np.outer(n, n) * unordered
        np.fill_diagonal(M, 1.0)
        value = 0.5 * float((D**2 / M).sum())
        # d value / d s_i for i in (k, c) = sum_k' 2 D[k, k'] ny[k', c] / M[k, k']
        W = 2.0 * D / M
        np.fill_diagonal(W, 0.0)
        per_group_label = W @ ny
        return PenaltyValue(value, int(same_label), unordered), per_group_label[groups, y]
    raise ValueError(f"unknown penalty mode {mode!r}")


def penalty_scores(params: ModelParams, a: np.ndarray) -> np.ndarray:
    if params.kind == models.LINEAR:
        return a @ params.weights[0]
    return models.logits(params, a)


def _score_backward(params: ModelParams, a: np.ndarray, dscores: np.ndarray) -> ModelParams:
    if params.kind == models.LINEAR:
        return ModelParams(models.LINEAR, (a.T @ dscores,), (np.zeros(1),))
    return models.backward(params, a, dscores)


def penalty(params: ModelParams, a: np.ndarray, y: np.ndarray, groups: np.ndarray,
            cfg: PenaltyConfig) -> PenaltyValue:
    return penalty_from_scores(penalty_scores(params, a), y, groups, cfg.mode)[0]


def penalty_grad(params: ModelParams, a: np.ndarray, y: np.ndarray, groups: np.ndarray,
                 cfg: PenaltyConfig) -> ModelParams:
    _, dscores = penalty_from_scores(penalty_scores(params, a), y, groups, cfg.mode)
    return _score_backward(params, a, dscores)


class Objective(NamedTuple):
    value: float
    grad: ModelParams
    penalty: PenaltyValue


def composite_objective(params: ModelParams, a: np.ndarray, y: np.ndarray, groups: np.ndarray,
                        cfg: PenaltyConfig) -> Objective:
    """``BCE + lambda * penalty + gamma * ||weights||^2`` (biases are not decayed)."""
    loss, grad = models.loss_and_grad(params, a, y)
    value = loss
    pen = PenaltyValue(0.0, 0, 0.0)
    if cfg.lam > 0:
        pen, dscores = penalty_from_scores(penalty_scores(params, a), y, groups, cfg.mode)
        value += cfg.lam * pen.value
        grad = models.add_scaled(grad, _score_backward(params, a, dscores), cfg.lam)
    if cfg.gamma > 0:
        value += cfg.gamma * params.weight_sq_norm()
        grad = ModelParams(
            grad.kind,
            tuple(g + 2.0 * cfg.gamma * w for g, w in zip(grad.weights, params.weights)),
            grad.biases,
        )
    return Objective(value, grad, pen)
