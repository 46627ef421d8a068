from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedida.data import subgroup_index
from fedida.rose import RoseConfig, bandwidth, estimate_sigma, fairness_aware_rose


def imbalanced_batch(seed, n=None):
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(20, 200))
    weights = rng.dirichlet(np.full(8, 0.5))
    combo = rng.choice(8, size=n, p=weights)
    s = np.stack([combo // 4, (combo // 2) % 2, combo % 2], axis=1)
    y = rng.integers(0, 2, n)
    a = rng.normal(size=(n, 3)) + combo[:, None]
    return a, s, y, rng


def check_postconditions(a, s, y, out):
    before = subgroup_index(s, y)
    after = subgroup_index(out.s, out.y)
    assert set(after.groups) == set(before.groups)
    assert all(len(rows) == out.n_target for rows in after.groups.values())
    # every output row carries its seed's sensitive values and outcome
    assert np.array_equal(out.s, s[out.source]) and np.array_equal(out.y, y[out.source])
    real = ~out.synthetic_mask
    assert np.array_equal(out.a[real], a[out.source[real]])
    for key, rows in before.groups.items():
        out_rows = after.groups[key]
        if len(rows) >= out.n_target:
            assert not out.synthetic_mask[out_rows].any()
            assert len(set(out.source[out_rows])) == out.n_target


@pytest.mark.parametrize("seed", range(25))
def test_auto_target_postconditions(seed):
    a, s, y, rng = imbalanced_batch(seed)
    out = fairness_aware_rose(a, s, y, RoseConfig(), rng)
    assert out.n_target == max(subgroup_index(s, y).sizes.values())
    check_postconditions(a, s, y, out)


@pytest.mark.parametrize("seed", range(25))
def test_fixed_target_postconditions(seed):
    a, s, y, rng = imbalanced_batch(seed)
    out = fairness_aware_rose(a, s, y, RoseConfig(n_target=12), rng)
    check_postconditions(a, s, y, out)


def test_synthetic_rows_copy_seed_in_zero_noise_limit(rng):
    a, s, y, _ = imbalanced_batch(3)
    out = fairness_aware_rose(a, s, y, RoseConfig(smoothing=1e-12, bandwidth="fixed"), rng)
    assert np.allclose(out.a, a[out.source], atol=1e-9)


def test_noise_scale_follows_bandwidth(rng):
    a = np.r_[rng.normal(size=(500, 2)) * [1.0, 3.0], rng.normal(size=(2, 2))]
    s = np.r_[np.zeros(500, int), np.ones(2, int)]
    y = np.zeros(502, int)
    cfg = RoseConfig(n_target=4000, smoothing=0.5, bandwidth="fixed")
    out = fairness_aware_rose(a, s, y, cfg, rng)
    big = out.synthetic_mask & (out.s[:, 0] == 0)
    noise = out.a[big] - a[out.source[big]]
    assert np.allclose(noise.std(axis=0), 0.5 * a[:500].std(axis=0), rtol=0.06)


def test_estimate_sigma_falls_back_to_global_scale():
    rows = np.array([[1.0, 2.0]])
    assert estimate_sigma(rows, 0.5, np.array([2.0, 4.0])).tolist() == [1.0, 4.0]


def test_silverman_bandwidth_shrinks_with_group_size():
    cfg = RoseConfig(smoothing=1.0)
    assert bandwidth(cfg, 1, 5) == 1.0
    assert bandwidth(cfg, 512, 5) == pytest.approx(512 ** (-1 / 9))


def test_absent_subgroups_are_not_created(rng):
    s = np.array([[0], [0], [1]])
    out = fairness_aware_rose(rng.normal(size=(3, 2)), s, np.array([0, 1, 0]), RoseConfig(n_target=5), rng)
    assert set(subgroup_index(out.s, out.y).groups) == {(0, 0), (0, 1), (1, 0)}


def test_single_subgroup_passes_through_with_warning(rng):
    a = rng.normal(size=(6, 2))
    with pytest.warns(UserWarning, match="single subgroup"):
        out = fairness_aware_rose(a, np.zeros((6, 1), int), np.ones(6, int), RoseConfig(), rng)
    assert np.array_equal(out.a, a) and not out.synthetic_mask.any()


def test_empty_batch_rejected(rng):
    with pytest.raises(ValueError):
        fairness_aware_rose(np.zeros((0, 2)), np.zeros((0, 1), int), np.zeros(0, int), RoseConfig(), rng)


@pytest.mark.parametrize("kw", [dict(n_target=0), dict(n_target="max"), dict(smoothing=0.0),
                                dict(bandwidth="scott"), dict(level="round")])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        RoseConfig(**kw)


def test_same_seed_same_output():
    a, s, y, _ = imbalanced_batch(5)
    o1 = fairness_aware_rose(a, s, y, RoseConfig(), np.random.default_rng(1))
    o2 = fairness_aware_rose(a, s, y, RoseConfig(), np.random.default_rng(1))
    assert np.array_equal(o1.a, o2.a) and np.array_equal(o1.source, o2.source)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 40))
def test_output_size_is_groups_times_target(seed, target):
    a, s, y, rng = imbalanced_batch(seed % 10_000)
    out = fairness_aware_rose(a, s, y, RoseConfig(n_target=target), rng)
    assert len(out.y) == len(subgroup_index(s, y).groups) * target
