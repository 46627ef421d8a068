"""Client-level evaluation and the mean/sd summaries reported across clients."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import TabularDataset, build_subgroup_index
from .federated import FederationResult, predict_proba
from .metrics import DEFAULT_MIN_GROUP_SIZE, HARD, METRICS, FairnessReport, fairness_report

SUMMARY_METRICS = ("auroc",) + METRICS
Z95 = 1.959963984540054


@dataclass(frozen=True)
class EvalConfig:
    threshold: float = 0.5
    min_group_size: int = DEFAULT_MIN_GROUP_SIZE
    mode: str = HARD

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must lie in [0, 1]")
        if self.min_group_size < 1:
            raise ValueError("min_group_size must be >= 1")
        if self.mode not in ("hard", "soft"):
            raise ValueError(f"unknown metric mode {self.mode!r}")


def evaluate_clients(result: FederationResult, eval_sets: list[TabularDataset], cfg: EvalConfig,
                     provenance: dict | None = None) -> list[FairnessReport]:
    """One report per client, each on that client's own held-out rows."""
    reports = []
    for k, ds in enumerate(eval_sets):
        probs = predict_proba(result.model_for(k), ds.a)
        prov = dict(provenance or {}, client=k, n=ds.n)
        reports.append(fairness_report(probs, ds.y, build_subgroup_index(ds), cfg.threshold, cfg.mode,
                                       cfg.min_group_size, prov))
    return reports


@dataclass(frozen=True)
class Summary:
    mean: float
    sd: float
    ci_low: float
    ci_high: float
    count: int


def summarize(values) -> Summary:
    """Mean, sample sd (ddof=1; 0 for one value) and a normal-approximation 95% CI.

    NaN entries (metrics undefined on a client) are left out.
    """
    v = np.asarray([x for x in values if x is not None and not math.isnan(x)], dtype=np.float64)
    if len(v) == 0:
        nan = float("nan")
        return Summary(nan, nan, nan, nan, 0)
    mean = float(v.mean())
    sd = float(v.std(ddof=1)) if len(v) > 1 else 0.0
    half = Z95 * sd / math.sqrt(len(v))
    return Summary(mean, sd, mean - half, mean + half, len(v))


def summarize_reports(reports: list[FairnessReport]) -> dict[str, Summary]:
    return {m: summarize([r.metric(m) for r in reports]) for m in SUMMARY_METRICS}


def mean_metric(reports: list[FairnessReport], name: str) -> float:
    return summarize([r.metric(name) for r in reports]).mean
