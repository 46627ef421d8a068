"""Fairness-aware ROSE: balance every (sensitive combination, outcome) subgroup.

Each subgroup present in the batch ends up with exactly ``N_target`` rows.
Large subgroups are subsampled without replacement; small ones keep all their
rows and are topped up with smoothed-bootstrap copies: a random seed row of
the same subgroup plus Gaussian noise on the non-sensitive features only.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .data import subgroup_index

AUTO = "auto"


@dataclass(frozen=True)
class RoseConfig:
    """``n_target`` is ``"auto"`` (largest subgroup in the batch) or a fixed count.

    The noise scale for a subgroup of size ``n_g`` is ``smoothing * sigma_hat``,
    shrunk by ``n_g ** (-1 / (p + 4))`` when ``bandwidth == "silverman"``.
    ``level`` chooses between rebalancing each mini-batch or the whole client
    dataset once per epoch.
    """

    n_target: int | str = AUTO
    smoothing: float = 0.1
    bandwidth: str = "silverman"
    level: str = "batch"
    seed: int = 0

    def __post_init__(self):
        if self.n_target != AUTO and (not isinstance(self.n_target, (int, np.integer)) or self.n_target < 1):
            raise ValueError(f"n_target must be 'auto' or an integer >= 1, got {self.n_target!r}")
        if not self.smoothing > 0:
            raise ValueError("smoothing must be > 0")
        if self.bandwidth not in ("silverman", "fixed"):
            raise ValueError(f"unknown bandwidth rule {self.bandwidth!r}")
        if self.level not in ("batch", "client"):
            raise ValueError(f"unknown level {self.level!r}")

    def to_dict(self) -> dict:
        return {"n_target": self.n_target, "smoothing": self.smoothing, "bandwidth": self.bandwidth,
                "level": self.level, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> RoseConfig:
        return cls(**d)


@dataclass(frozen=True)
class AugmentedBatch:
    a: np.ndarray
    s: np.ndarray
    y: np.ndarray
    synthetic_mask: np.ndarray
    source: np.ndarray  # input row each output row was copied or seeded from
    n_target: int


def estimate_sigma(rows: np.ndarray, h: float, fallback_scale: np.ndarray | None = None) -> np.ndarray:
    """Diagonal noise covariance ``(h * sd_j)^2`` from within-group spreads.

    ``sd_j`` is the population standard deviation of feature ``j`` in the
    group. Where it is zero (single row, or a constant feature) the global
    per-feature scale ``fallback_scale`` is used instead.
    """
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    if len(rows) > 1:
        dev = rows - rows.mean(axis=0)
        sd = np.sqrt(np.einsum("ij,ij->j", dev, dev) / len(rows))
    else:
        sd = np.zeros(rows.shape[1])
    if fallback_scale is not None:
        sd = np.where(sd > 0, sd, np.asarray(fallback_scale, dtype=np.float64))
    return (h * sd) ** 2


def bandwidth(cfg: RoseConfig, n_group: int, p: int) -> float:
    if cfg.bandwidth == "fixed":
        return cfg.smoothing
    return cfg.smoothing * n_group ** (-1.0 / (p + 4))


def fairness_aware_rose(a: np.ndarray, s: np.ndarray, y: np.ndarray, cfg: RoseConfig,
                        rng: np.random.Generator | None = None, index=None) -> AugmentedBatch:
    """Rebalance a batch so every present (s, y) subgroup has ``N_target`` rows.

    ``index`` may pass a precomputed outcome-crossed :class:`SubgroupIndex`.
    Subgroups absent from the batch are not created.
    """
    a = np.asarray(a, dtype=np.float64)
    s = np.asarray(s)
    if s.ndim == 1:
        s = s[:, None]
    y = np.asarray(y)
    if len(y) == 0:
        raise ValueError("cannot oversample an empty batch")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    if index is None:
        index = subgroup_index(s, y)
    sizes = [len(rows) for rows in index.groups.values()]

    if cfg.n_target == AUTO:
        if len(sizes) == 1:
            warnings.warn("single subgroup in batch; returning it unchanged", stacklevel=2)
            return AugmentedBatch(a, s, y, np.zeros(len(y), dtype=bool), np.arange(len(y)), len(y))
        n_target = max(sizes)
    else:
        n_target = int(cfg.n_target)

    p = a.shape[1]
    global_sd = a.std(axis=0)
    groups = list(index.groups.values())
    sizes = np.array(sizes)
    members = np.concatenate(groups)
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    label = np.repeat(np.arange(len(groups)), sizes)

    # within-group population sd via one-hot sums, then the usual fallback
    onehot = np.zeros((len(groups), len(members)))
    onehot[label, np.arange(len(members))] = 1.0
    x = a[members]
    mean = onehot @ x / sizes[:, None]
    dev = x - mean[label]
    sd = np.sqrt(onehot @ (dev * dev) / sizes[:, None])
    sd = np.where((sd > 0) & (sizes[:, None] > 1), sd, global_sd)
    h = np.array([bandwidth(cfg, int(m), p) for m in sizes])

    extra = np.maximum(n_target - sizes, 0)
    short = np.repeat(np.arange(len(groups)), extra)
    seeds = members[offsets[short] + rng.integers(sizes[short])]
    noise_rows = rng.standard_normal((len(short), p)) * (h[short, None] * sd[short])

    per_group_seeds = np.split(seeds, np.cumsum(extra)[:-1])
    parts_src = []
    for rows, extra_rows in zip(groups, per_group_seeds):
        if len(rows) > n_target:
            parts_src.append(rng.choice(rows, size=n_target, replace=False))
        else:
            parts_src.append(np.concatenate([rows, extra_rows]))
    src = np.concatenate(parts_src)
    synthetic = (np.arange(len(src)) % n_target) >= np.repeat(sizes, n_target)
    noise = np.zeros((len(src), p))
    noise[synthetic] = noise_rows

    return AugmentedBatch(
        a=a[src] + noise,
        s=s[src],
        y=y[src],
        synthetic_mask=synthetic,
        source=src,
        n_target=n_target,
    )
