"""Hyperparameter search for the fairness weight lambda and the decay weight gamma.

lambda: every client scans an increasing grid locally and keeps the largest
value whose validation accuracy stays above ``degradation_factor * Acc_0``;
the server takes the minimum over clients and spaces candidates below it.

gamma: a coarse grid over the initial range is evaluated with full federated
runs, then a finer grid between the winner's neighbours. The winner on each
grid is the lowest-DPD candidate among those whose validation AUROC is within
``auroc_factor`` of the best one.
"""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import models
from .data import Splits, TabularDataset
from .evaluation import EvalConfig, evaluate_clients, mean_metric
from .federated import FederationConfig, FederationResult, local_train, predict_proba, run_federation

logger = logging.getLogger(__name__)

DEGRADATION_FACTOR = 0.995


# ---------------------------------------------------------------------------
# lambda
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LambdaSearchConfig:
    grid: tuple[float, ...] = (0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0)
    degradation_factor: float = DEGRADATION_FACTOR
    metric: str = "accuracy"
    epochs: int = 1

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=np.float64)
        if len(g) == 0 or g[0] != 0.0:
            raise ValueError("lambda grid must start at 0")
        if (np.diff(g) <= 0).any():
            raise ValueError("lambda grid must be strictly increasing")
        if not 0.0 < self.degradation_factor <= 1.0:
            raise ValueError("degradation_factor must lie in (0, 1]")
        if self.metric != "accuracy":
            raise ValueError(f"unsupported metric {self.metric!r}")

    def to_dict(self) -> dict:
        return {"grid": list(self.grid), "degradation_factor": self.degradation_factor,
                "metric": self.metric, "epochs": self.epochs}


@dataclass(frozen=True)
class LambdaSearchResult:
    lam: float
    grid: tuple[float, ...]
    accuracies: tuple[float, ...]  # only the values evaluated before the stop

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "grid": list(self.grid), "accuracies": list(self.accuracies)}


def select_lambda(grid, accuracies, degradation_factor: float = DEGRADATION_FACTOR) -> float:
    """Last grid value before accuracy first falls below ``factor * accuracies[0]``."""
    acc0 = accuracies[0]
    chosen = grid[0]
    for lam, acc in zip(grid[1:], accuracies[1:]):
        if acc < degradation_factor * acc0:
            break
        chosen = lam
    return float(chosen)


def accuracy(params: models.ModelParams, ds: TabularDataset, threshold: float = 0.5) -> float:
    return float(np.mean((predict_proba(params, ds.a) >= threshold) == ds.y))


def search_lambda_local(train: TabularDataset, val: TabularDataset, base: FederationConfig,
                        cfg: LambdaSearchConfig, client: int = 0) -> LambdaSearchResult:
    """Scan the grid on one client, stopping at the first degraded value.

    Each candidate trains a fresh local model for ``cfg.epochs`` epochs with
    the base objective and oversampling settings and only lambda changed.
    """
    if val.n == 0:
        raise ValueError(f"client {client} has no validation rows")
    init = models.init_params(base.model, train.p_a, base.seed, base.hidden)
    accs: list[float] = []
    for i, lam in enumerate(cfg.grid):
        cand = replace(base, local_epochs=cfg.epochs, penalty=replace(base.penalty, lam=float(lam)))
        params, _ = local_train(init, train, cand, client, 0)
        accs.append(accuracy(params, val))
        if i > 0 and accs[-1] < cfg.degradation_factor * accs[0]:
            break
    lam = select_lambda(cfg.grid[: len(accs)], accs, cfg.degradation_factor)
    return LambdaSearchResult(lam, tuple(cfg.grid), tuple(accs))


def combine_lambda(per_client, count: int) -> list[float]:
    """``count`` equally spaced values in ``(0, min(per_client)]``."""
    per_client = list(per_client)
    if not per_client:
        raise ValueError("no per-client lambda values")
    if count < 1:
        raise ValueError("count must be >= 1")
    lam_max = min(per_client)
    if lam_max <= 0:
        warnings.warn("every client degrades at the first nonzero lambda; using lambda = 0", stacklevel=2)
        return [0.0]
    return [lam_max * (i + 1) / count for i in range(count)]


# ---------------------------------------------------------------------------
# gamma
# ---------------------------------------------------------------------------


def gamma_grid(lo: float, hi: float, m: int) -> list[float]:
    if m < 1 or not 0 <= lo <= hi:
        raise ValueError(f"bad gamma range [{lo}, {hi}] with m={m}")
    return [float(x) for x in np.linspace(lo, hi, m)]


def refine_grid(coarse, best_index: int, m_refined: int) -> list[float]:
    """``m_refined`` points spanning the winner's neighbours, clamped at the ends.

    The coarse winner itself always appears: the nearest point is replaced by it.
    """
    coarse = list(coarse)
    lo = coarse[max(best_index - 1, 0)]
    hi = coarse[min(best_index + 1, len(coarse) - 1)]
    grid = np.linspace(lo, hi, m_refined)
    best = coarse[best_index]
    # exact assignment, so float drift in linspace cannot hide the winner
    grid[np.argmin(np.abs(grid - best))] = best
    return [float(x) for x in grid]


@dataclass(frozen=True)
class Candidate:
    gamma: float
    auroc: float
    dpd: float
    error: str | None = None

    def to_dict(self) -> dict:
        def num(x):
            return None if isinstance(x, float) and math.isnan(x) else x

        return {"gamma": self.gamma, "auroc": num(self.auroc), "dpd": num(self.dpd), "error": self.error}


def select_gamma(candidates: list[Candidate], auroc_factor: float = DEGRADATION_FACTOR) -> int:
    """Index of the min-DPD candidate among those near the best AUROC; ties go to smaller gamma."""
    ok = [i for i, c in enumerate(candidates) if c.error is None and not math.isnan(c.auroc)]
    if not ok:
        raise ValueError("no candidate produced a usable AUROC")
    best_auroc = max(candidates[i].auroc for i in ok)
    guard = [i for i in ok if candidates[i].auroc >= auroc_factor * best_auroc]

    def key(i):
        d = candidates[i].dpd
        return (math.inf if math.isnan(d) else d, candidates[i].gamma)

    return min(guard, key=key)


@dataclass(frozen=True)
class GammaSearch:
    best: float
    best_index: int
    candidates: tuple[Candidate, ...]

    @property
    def grid(self) -> list[float]:
        return [c.gamma for c in self.candidates]


def _evaluate_candidate(gamma: float, clients: list[Splits], fed_cfg: FederationConfig,
                        eval_cfg: EvalConfig) -> Candidate:
    cfg = replace(fed_cfg, penalty=replace(fed_cfg.penalty, gamma=float(gamma)))
    result = run_federation([c.train for c in clients], cfg)
    reports = evaluate_clients(result, [c.val for c in clients], eval_cfg)
    return Candidate(float(gamma), mean_metric(reports, "auroc"), mean_metric(reports, "dpd"))


def optimize_gamma(grid, fed_cfg: FederationConfig, clients: list[Splits], eval_cfg: EvalConfig | None = None,
                   auroc_factor: float = DEGRADATION_FACTOR, workers: int = 1) -> GammaSearch:
    """One full federated run per candidate (shared seed), scored on validation splits."""
    grid = [float(g) for g in grid]
    if not grid:
        raise ValueError("gamma grid is empty")
    eval_cfg = eval_cfg or EvalConfig()

    def run(g):
        try:
            return _evaluate_candidate(g, clients, fed_cfg, eval_cfg), None
        except Exception as exc:  # noqa: BLE001 - a failed candidate is recorded, not fatal
            logger.warning("gamma=%g failed: %s", g, exc)
            return Candidate(g, float("nan"), float("nan"), repr(exc)), exc

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(run, grid))
    else:
        outcomes = [run(g) for g in grid]
    if all(exc is not None for _, exc in outcomes):
        raise outcomes[0][1]
    candidates = [c for c, _ in outcomes]
    idx = select_gamma(candidates, auroc_factor)
    return GammaSearch(candidates[idx].gamma, idx, tuple(candidates))


@dataclass
class GammaSearchResult:
    coarse: GammaSearch
    refined: GammaSearch
    lam: float
    result: FederationResult | None = field(default=None, repr=False)

    @property
    def coarse_grid(self) -> list[float]:
        return self.coarse.grid

    @property
    def coarse_best(self) -> float:
        return self.coarse.best

    @property
    def refined_grid(self) -> list[float]:
        return self.refined.grid

    @property
    def final(self) -> float:
        return self.refined.best

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "coarse_grid": self.coarse_grid,
            "coarse_best": self.coarse_best,
            "coarse_candidates": [c.to_dict() for c in self.coarse.candidates],
            "refined_grid": self.refined_grid,
            "refined_candidates": [c.to_dict() for c in self.refined.candidates],
            "final": self.final,
        }


def fedida_full(clients: list[Splits], base: FederationConfig, lam: float,
                gamma_range: tuple[float, float] = (0.0001, 0.1), m: int = 10, m_refined: int = 10,
                eval_cfg: EvalConfig | None = None, workers: int = 1) -> GammaSearchResult:
    """Coarse then refined gamma search at fixed lambda, then the deployed training run."""
    if m < 2 or m_refined < 2:
        raise ValueError("m and m' must both be >= 2")
    base = replace(base, penalty=replace(base.penalty, lam=float(lam)))
    coarse = optimize_gamma(gamma_grid(*gamma_range, m), base, clients, eval_cfg, workers=workers)
    refined_grid = refine_grid(coarse.grid, coarse.best_index, m_refined)
    refined = optimize_gamma(refined_grid, base, clients, eval_cfg, workers=workers)
    final_cfg = replace(base, penalty=replace(base.penalty, gamma=refined.best))
    result = run_federation([c.train for c in clients], final_cfg)
    return GammaSearchResult(coarse, refined, float(lam), result)
