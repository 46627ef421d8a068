from __future__ import annotations

import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedida import metrics
from fedida.data import subgroup_index
from fedida.metrics import HARD, SOFT, MetricError


def auroc_pairs(scores, y):
    """Direct pair counting: P(score_pos > score_neg) + 0.5 P(tie)."""
    pos = [s for s, t in zip(scores, y) if t == 1]
    neg = [s for s, t in zip(scores, y) if t == 0]
    wins = sum(1.0 if p > q else 0.5 if p == q else 0.0 for p in pos for q in neg)
    return wins / (len(pos) * len(neg))


def index_of(groups):
    return subgroup_index(np.asarray(groups)[:, None])


def test_auroc_perfect_and_reversed():
    y = np.array([0, 0, 1, 1])
    assert metrics.auroc([0.1, 0.2, 0.8, 0.9], y) == 1.0
    assert metrics.auroc([0.9, 0.8, 0.2, 0.1], y) == 0.0


def test_auroc_all_tied_is_half():
    assert metrics.auroc(np.full(6, 0.3), [0, 1, 0, 1, 1, 0]) == 0.5


@pytest.mark.parametrize("y, missing", [([1, 1, 1], "negative"), ([0, 0, 0], "positive")])
def test_auroc_single_class(y, missing):
    with pytest.raises(MetricError, match=missing):
        metrics.auroc([0.1, 0.2, 0.3], y)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 200), st.integers(0, 2**32 - 1), st.booleans())
def test_auroc_equals_pair_counting(n, seed, coarse):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n)
    y[0], y[1] = 0, 1
    scores = rng.integers(0, 5, n) / 4 if coarse else rng.random(n)
    assert metrics.auroc(scores, y) == pytest.approx(auroc_pairs(scores, y), abs=1e-15)


def test_dpd_dpr_hard():
    groups = [0] * 10 + [1] * 10
    scores = np.r_[np.full(6, 0.9), np.full(4, 0.1), np.full(3, 0.9), np.full(7, 0.1)]
    dp = metrics.demographic_parity(scores, np.zeros(20), index_of(groups))
    assert dp.dpd == pytest.approx(0.3)
    assert dp.dpr == pytest.approx(0.5)


def test_dpr_zero_min_and_zero_max():
    groups = [0] * 5 + [1] * 5
    assert metrics.demographic_parity(np.r_[np.ones(5), np.zeros(5)], np.zeros(10), index_of(groups)).dpr == 0.0
    with pytest.raises(MetricError, match="zero"):
        metrics.demographic_parity(np.zeros(10), np.zeros(10), index_of(groups))


def test_dfpr_only_uses_negatives():
    groups = np.array([0] * 8 + [1] * 8)
    y = np.array([0, 0, 0, 0, 0, 1, 1, 1] * 2)
    scores = np.r_[[1, 1, 0, 0, 0, 1, 1, 1], [1, 0, 0, 0, 0, 0, 0, 0]].astype(float)
    assert metrics.dfpr(scores, y, index_of(groups)) == pytest.approx(2 / 5 - 1 / 5)


def test_dfpr_without_negatives():
    with pytest.raises(MetricError, match="negatives"):
        metrics.dfpr(np.ones(10), np.ones(10), index_of([0] * 5 + [1] * 5))


def test_dppv_precision_gap():
    groups = np.array([0] * 6 + [1] * 6)
    y = np.array([1, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0])
    scores = np.array([1, 1, 1, 1, 1, 0, 1, 1, 1, 1, 1, 0], dtype=float)
    assert metrics.dppv(scores, y, index_of(groups), min_group_size=1) == pytest.approx(2 / 5 - 1 / 5)


def test_small_groups_are_skipped_and_reported():
    groups = [0] * 10 + [1] * 10 + [2] * 3
    scores = np.r_[np.full(10, 0.9), np.full(10, 0.1), np.full(3, 0.9)]
    r = metrics.positive_rates(scores, index_of(groups))
    assert r.skipped == [(2,)]
    rep = metrics.fairness_report(scores, np.r_[np.zeros(12), np.ones(11)], index_of(groups))
    assert "dpd:2" in rep.skipped_groups


def test_single_eligible_group_is_undefined():
    groups = [0] * 10 + [1] * 2
    with pytest.raises(MetricError, match="2 eligible"):
        metrics.demographic_parity(np.full(12, 0.7), np.zeros(12), index_of(groups))
    rep = metrics.fairness_report(np.linspace(0, 1, 12), np.r_[np.zeros(6), np.ones(6)], index_of(groups))
    assert math.isnan(rep.dpd) and rep.undefined


def test_outcome_crossed_index_is_rejected():
    ix = subgroup_index(np.array([[0], [1], [0], [1]]), np.array([0, 0, 1, 1]))
    with pytest.raises(ValueError, match="outcome"):
        metrics.positive_rates(np.ones(4), ix)


def test_soft_mode_uses_mean_scores():
    groups = [0] * 5 + [1] * 5
    scores = np.r_[np.full(5, 0.6), np.full(5, 0.2)]
    dp = metrics.demographic_parity(scores, np.zeros(10), index_of(groups), mode=SOFT)
    assert dp.dpd == pytest.approx(0.4)
    assert dp.dpr == pytest.approx(1 / 3)


def test_report_to_dict_is_json_ready(rng):
    groups = rng.integers(0, 3, 200)
    y = rng.integers(0, 2, 200)
    rep = metrics.fairness_report(rng.random(200), y, index_of(groups), provenance={"setup": "x"})
    d = rep.to_dict()
    json.dumps(d)
    assert d["setup"] == "x" and "positive_rate[0]" in d and d["mode"] == HARD


def brute_gap(rates):
    return max(abs(a - b) for a, b in itertools.combinations(rates, 2))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_gap_equals_pairwise_max(seed):
    rng = np.random.default_rng(seed)
    groups = rng.integers(0, 4, 120)
    scores = rng.random(120)
    r = metrics.positive_rates(scores, index_of(groups), mode=SOFT, min_group_size=1)
    assert metrics.demographic_parity(scores, None, index_of(groups), mode=SOFT,
                                      min_group_size=1).dpd == pytest.approx(brute_gap(list(r.rates.values())))


def random_probe(metric, seed, min_group_size=5):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(40, 150))
    groups = rng.integers(0, int(rng.integers(2, 5)), n)
    y = rng.integers(0, 2, n)
    scores = rng.random(n)
    row = int(rng.integers(n))
    new_y = int(rng.integers(0, 2)) if metric in ("dfpr", "dppv") else int(y[row])
    return metrics.perturbation_probe(metric, scores, y, index_of(groups), row, (float(rng.random()), new_y),
                                      min_group_size)


@pytest.mark.parametrize("metric", metrics.METRICS)
def test_single_row_change_respects_bound(metric):
    checked = 0
    for seed in range(150):
        try:
            probe = random_probe(metric, seed)
        except (MetricError, ValueError):
            continue
        checked += 1
        if metric == "dpr":
            assert probe.rate_change <= probe.bound * probe.delta**2 + 1e-12
            assert probe.change <= probe.rate_change / probe.delta**2 + 1e-12
        else:
            assert probe.change <= probe.bound + 1e-12
    assert checked > 100


def test_probe_rejects_hard_scores_outside_unit_interval():
    with pytest.raises(ValueError):
        metrics.perturbation_probe("dpd", np.full(10, 0.5), np.zeros(10), index_of([0] * 5 + [1] * 5), 0, (1.5, 0))
