"""Group fairness metrics (DPD, DPR, DFPR, DPPV), AUROC and perturbation probes.

Metrics run in one of two modes. ``hard`` thresholds scores into decisions
before taking group means; ``soft`` averages the scores themselves (they must
be probabilities in [0, 1]). Groups too small to give a stable rate are left
out of the pairwise maxima and reported as skipped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.stats import rankdata

from .data import SubgroupIndex

HARD = "hard"
SOFT = "soft"
METRICS = ("dpd", "dpr", "dfpr", "dppv")
DEFAULT_MIN_GROUP_SIZE = 5


class MetricError(ValueError):
    """A metric is undefined on the given data (too few eligible groups, no positives...)."""


def auroc(scores, y) -> float:
    """Mann-Whitney AUROC; tied scores count one half through midranks."""
    scores = np.asarray(scores, dtype=np.float64)
    y = np.asarray(y)
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0:
        raise MetricError("AUROC needs both classes; no positive (y=1) samples")
    if n_neg == 0:
        raise MetricError("AUROC needs both classes; no negative (y=0) samples")
    ranks = rankdata(scores)
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def key_str(key: tuple[int, ...]) -> str:
    return "-".join(str(k) for k in key)


class GroupRates(NamedTuple):
    rates: dict[tuple[int, ...], float]
    skipped: list[tuple[int, ...]]


class DemographicParity(NamedTuple):
    dpd: float
    dpr: float
    rates: dict[tuple[int, ...], float]
    skipped: list[tuple[int, ...]]


def _sensitive_groups(index: SubgroupIndex) -> dict[tuple[int, ...], np.ndarray]:
    if index.by_outcome:
        raise ValueError("fairness metrics group by sensitive attributes only; got an outcome-crossed index")
    return index.groups


def _decisions(scores: np.ndarray, threshold: float, mode: str) -> np.ndarray:
    if mode == HARD:
        return (scores >= threshold).astype(np.float64)
    if mode == SOFT:
        return scores
    raise ValueError(f"unknown metric mode {mode!r}")


def positive_rates(scores, index: SubgroupIndex, threshold: float = 0.5, mode: str = HARD,
                   min_group_size: int = DEFAULT_MIN_GROUP_SIZE) -> GroupRates:
    d = _decisions(np.asarray(scores, dtype=np.float64), threshold, mode)
    rates, skipped = {}, []
    for key, rows in _sensitive_groups(index).items():
        if len(rows) < min_group_size:
            skipped.append(key)
        else:
            rates[key] = float(d[rows].mean())
    return GroupRates(rates, skipped)


def false_positive_rates(scores, y, index: SubgroupIndex, threshold: float = 0.5, mode: str = HARD,
                         min_group_size: int = DEFAULT_MIN_GROUP_SIZE) -> GroupRates:
    d = _decisions(np.asarray(scores, dtype=np.float64), threshold, mode)
    y = np.asarray(y)
    rates, skipped = {}, []
    for key, rows in _sensitive_groups(index).items():
        neg = rows[y[rows] == 0]
        if len(neg) < min_group_size:
            skipped.append(key)
        else:
            rates[key] = float(d[neg].mean())
    return GroupRates(rates, skipped)


def positive_predictive_values(scores, y, index: SubgroupIndex, threshold: float = 0.5, mode: str = HARD,
                               min_group_size: int = DEFAULT_MIN_GROUP_SIZE) -> GroupRates:
    """Per-group precision; in soft mode the score-weighted mean of ``y``."""
    d = _decisions(np.asarray(scores, dtype=np.float64), threshold, mode)
    y = np.asarray(y, dtype=np.float64)
    rates, skipped = {}, []
    for key, rows in _sensitive_groups(index).items():
        mass = d[rows].sum()
        if mass < min_group_size or mass <= 0:
            skipped.append(key)
        else:
            rates[key] = float(np.dot(d[rows], y[rows]) / mass)
    return GroupRates(rates, skipped)


def _gap(rates: dict, what: str) -> float:
    if len(rates) < 2:
        raise MetricError(f"{what} needs at least 2 eligible groups, got {len(rates)}")
    vals = list(rates.values())
    return float(max(vals) - min(vals))


def _ratio(rates: dict) -> float:
    if len(rates) < 2:
        raise MetricError(f"DPR needs at least 2 eligible groups, got {len(rates)}")
    hi, lo = max(rates.values()), min(rates.values())
    if hi <= 0:
        raise MetricError("DPR undefined: every eligible group has a zero positive rate")
    return float(lo / hi)


def demographic_parity(scores, y, index: SubgroupIndex, threshold: float = 0.5, mode: str = HARD,
                       min_group_size: int = DEFAULT_MIN_GROUP_SIZE) -> DemographicParity:
    r = positive_rates(scores, index, threshold, mode, min_group_size)
    return DemographicParity(_gap(r.rates, "DPD"), _ratio(r.rates), r.rates, r.skipped)


def dfpr(scores, y, index: SubgroupIndex, threshold: float = 0.5, mode: str = HARD,
         min_group_size: int = DEFAULT_MIN_GROUP_SIZE) -> float:
    r = false_positive_rates(scores, y, index, threshold, mode, min_group_size)
    if not r.rates:
        raise MetricError("DFPR needs negatives; no group has enough y=0 samples")
    return _gap(r.rates, "DFPR")


def dppv(scores, y, index: SubgroupIndex, threshold: float = 0.5, mode: str = HARD,
         min_group_size: int = DEFAULT_MIN_GROUP_SIZE) -> float:
    r = positive_predictive_values(scores, y, index, threshold, mode, min_group_size)
    return _gap(r.rates, "DPPV")


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass
class FairnessReport:
    auroc: float
    dpd: float
    dpr: float
    dfpr: float
    dppv: float
    per_group_positive_rate: dict[str, float]
    per_group_fpr: dict[str, float]
    per_group_ppv: dict[str, float]
    threshold: float
    mode: str
    min_group_size: int
    skipped_groups: list[str] = field(default_factory=list)
    undefined: list[str] = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def metric(self, name: str) -> float:
        return getattr(self, name)

    def to_dict(self) -> dict:
        """Flat JSON-ready mapping; undefined metrics become ``None``."""

        def num(x: float):
            return None if x is None or (isinstance(x, float) and math.isnan(x)) else x

        out = dict(self.provenance)
        out.update({m: num(getattr(self, m)) for m in ("auroc",) + METRICS})
        out.update(threshold=self.threshold, mode=self.mode, min_group_size=self.min_group_size)
        for prefix, rates in (("positive_rate", self.per_group_positive_rate),
                              ("fpr", self.per_group_fpr), ("ppv", self.per_group_ppv)):
            for k, v in rates.items():
                out[f"{prefix}[{k}]"] = v
        out["skipped_groups"] = list(self.skipped_groups)
        out["undefined"] = list(self.undefined)
        return out


def fairness_report(probs, y, index: SubgroupIndex, threshold: float = 0.5, mode: str = HARD,
                    min_group_size: int = DEFAULT_MIN_GROUP_SIZE, provenance: dict | None = None) -> FairnessReport:
    """All five metrics at once; a metric that is undefined on this data is NaN."""
    probs = np.asarray(probs, dtype=np.float64)
    undefined: list[str] = []
    skipped: list[str] = []

    def attempt(name, fn):
        try:
            return fn()
        except MetricError as exc:
            undefined.append(f"{name}: {exc}")
            return float("nan")

    au = attempt("auroc", lambda: auroc(probs, y))
    pr = positive_rates(probs, index, threshold, mode, min_group_size)
    fp = false_positive_rates(probs, y, index, threshold, mode, min_group_size)
    pv = positive_predictive_values(probs, y, index, threshold, mode, min_group_size)
    for name, r in (("dpd", pr), ("dfpr", fp), ("dppv", pv)):
        skipped.extend(f"{name}:{key_str(k)}" for k in r.skipped)
    return FairnessReport(
        auroc=au,
        dpd=attempt("dpd", lambda: _gap(pr.rates, "DPD")),
        dpr=attempt("dpr", lambda: _ratio(pr.rates)),
        dfpr=attempt("dfpr", lambda: _gap(fp.rates, "DFPR")),
        dppv=attempt("dppv", lambda: _gap(pv.rates, "DPPV")),
        per_group_positive_rate={key_str(k): v for k, v in pr.rates.items()},
        per_group_fpr={key_str(k): v for k, v in fp.rates.items()},
        per_group_ppv={key_str(k): v for k, v in pv.rates.items()},
        threshold=threshold,
        mode=mode,
        min_group_size=min_group_size,
        skipped_groups=skipped,
        undefined=undefined,
        provenance=dict(provenance or {}),
    )


# ---------------------------------------------------------------------------
# Single-row perturbation probes (soft mode)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Probe:
    before: float
    after: float
    bound: float
    rate_change: float  # max |change| over the per-group rates the metric is built from
    delta: float  # smallest eligible group rate before/after (DPR only, else nan)

    @property
    def change(self) -> float:
        return abs(self.after - self.before)


_RATES = {
    "dpd": lambda s, y, ix, ms: positive_rates(s, ix, mode=SOFT, min_group_size=ms),
    "dpr": lambda s, y, ix, ms: positive_rates(s, ix, mode=SOFT, min_group_size=ms),
    "dfpr": lambda s, y, ix, ms: false_positive_rates(s, y, ix, mode=SOFT, min_group_size=ms),
    "dppv": lambda s, y, ix, ms: positive_predictive_values(s, y, ix, mode=SOFT, min_group_size=ms),
}


def perturbation_probe(metric: str, scores, y, index: SubgroupIndex, row: int,
                       replacement: tuple[float, int],
                       min_group_size: int = DEFAULT_MIN_GROUP_SIZE) -> Probe:
    """Recompute a soft-mode metric after replacing one row's (score, label).

    The bound is the single-row sensitivity: 1/|group| for DPD, 1/(negatives in
    the group) for DFPR, 1/(soft positive mass of the group) for DPPV, and
    (1/delta^2)/|group| for DPR with delta the smallest eligible group rate.
    """
    if metric not in _RATES:
        raise ValueError(f"unknown metric {metric!r}")
    scores = np.asarray(scores, dtype=np.float64)
    y = np.asarray(y)
    if not 0 <= row < len(scores):
        raise IndexError(f"row {row} out of range")
    new_score, new_y = float(replacement[0]), int(replacement[1])
    if index.by_outcome and new_y != y[row]:
        raise ValueError("replacement would move the row to another subgroup")
    if not 0.0 <= new_score <= 1.0:
        raise ValueError("soft-mode probes need scores in [0, 1]")
    scores2, y2 = scores.copy(), y.copy()
    scores2[row], y2[row] = new_score, new_y

    before = _RATES[metric](scores, y, index, min_group_size).rates
    after = _RATES[metric](scores2, y2, index, min_group_size).rates
    if before.keys() != after.keys():
        raise ValueError("replacement changes which groups are eligible")
    value = (lambda r: _ratio(r)) if metric == "dpr" else (lambda r: _gap(r, metric.upper()))
    v0, v1 = value(before), value(after)
    rate_change = max(abs(before[k] - after[k]) for k in before)

    key = index.keys[index.labels[row]]
    rows = index.groups[key]
    delta = float("nan")
    if metric == "dpd":
        bound = 1.0 / len(rows)
    elif metric == "dpr":
        delta = min(min(before.values()), min(after.values()))
        bound = (1.0 / len(rows)) / delta**2
    elif metric == "dfpr":
        neg = max(int((y[rows] == 0).sum()), int((y2[rows] == 0).sum()))
        bound = 1.0 / neg if (y[row] == 0 or new_y == 0) else 0.0
    else:
        others = scores[rows].sum() - scores[row]
        denom = others + min(scores[row], new_score)
        bound = 1.0 / denom if denom > 0 else float("inf")
    return Probe(v0, v1, bound, rate_change, delta)
