"""Tabular data: schema, CSV ingestion, subgroup indexing, partitioning and splits.

Sensitive attributes are kept as integer category indices in ``s`` and never
enter the model input ``a``; one-hot expansion only happens for non-sensitive
categoricals.
"""

from __future__ import annotations

import json
import logging
from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np
import pandas as pd
from scipy.optimize import nnls

logger = logging.getLogger(__name__)

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"
SENSITIVE = "sensitive-categorical"
OUTCOME = "outcome"
KINDS = (CONTINUOUS, CATEGORICAL, SENSITIVE, OUTCOME)
MISSING = ("", "?")


@dataclass(frozen=True)
class ColumnSchema:
    name: str
    kind: str
    categories: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        out: dict = {"name": self.name, "kind": self.kind}
        if self.categories:
            out["categories"] = list(self.categories)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> ColumnSchema:
        return cls(d["name"], d["kind"], tuple(str(c) for c in d.get("categories", ())))


def validate_schema(schema: Sequence[ColumnSchema]) -> tuple[ColumnSchema, ...]:
    schema = tuple(schema)
    names = [c.name for c in schema]
    if len(set(names)) != len(names):
        raise ValueError("schema column names must be unique")
    for col in schema:
        if col.kind not in KINDS:
            raise ValueError(f"column {col.name!r}: unknown kind {col.kind!r}")
        if col.kind in (CATEGORICAL, SENSITIVE):
            if not col.categories:
                raise ValueError(f"column {col.name!r}: categorical column needs categories")
        if col.categories and len(set(col.categories)) != len(col.categories):
            raise ValueError(f"column {col.name!r}: duplicate categories")
        if col.kind == OUTCOME and col.categories and len(col.categories) != 2:
            raise ValueError(f"column {col.name!r}: outcome needs exactly 2 categories")
    if sum(c.kind == OUTCOME for c in schema) != 1:
        raise ValueError("schema needs exactly one outcome column")
    if not any(c.kind == SENSITIVE for c in schema):
        raise ValueError("schema needs at least one sensitive column")
    return schema


def load_schema(path: str | Path) -> tuple[ColumnSchema, ...]:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return validate_schema(ColumnSchema.from_dict(d) for d in raw)


@dataclass(frozen=True)
class TabularDataset:
    """Rows split into model features ``a``, sensitive indices ``s`` and outcome ``y``."""

    a: np.ndarray
    s: np.ndarray
    y: np.ndarray
    schema: tuple[ColumnSchema, ...]
    feature_names: tuple[str, ...]
    continuous: np.ndarray  # bool mask over columns of ``a``
    row_ids: np.ndarray
    dropped_rows: int = 0

    def __post_init__(self):
        n = len(self.y)
        if self.a.shape[0] != n or self.s.shape[0] != n or len(self.row_ids) != n:
            raise ValueError("a, s, y and row_ids must have the same number of rows")

    @property
    def n(self) -> int:
        return len(self.y)

    def __len__(self) -> int:
        return len(self.y)

    @property
    def p_a(self) -> int:
        return self.a.shape[1]

    @property
    def sensitive_columns(self) -> tuple[ColumnSchema, ...]:
        return tuple(c for c in self.schema if c.kind == SENSITIVE)

    def take(self, idx) -> TabularDataset:
        idx = np.asarray(idx)
        return replace(self, a=self.a[idx], s=self.s[idx], y=self.y[idx], row_ids=self.row_ids[idx])

    def group_label(self, key: tuple[int, ...]) -> str:
        cols = self.sensitive_columns
        parts = [cols[i].categories[k] for i, k in enumerate(key[: len(cols)])]
        if len(key) > len(cols):
            parts.append(f"y={key[-1]}")
        return ",".join(parts)


def concat(parts: Sequence[TabularDataset]) -> TabularDataset:
    first = parts[0]
    return replace(
        first,
        a=np.concatenate([p.a for p in parts]),
        s=np.concatenate([p.s for p in parts]),
        y=np.concatenate([p.y for p in parts]),
        row_ids=np.concatenate([p.row_ids for p in parts]),
        dropped_rows=sum(p.dropped_rows for p in parts),
    )


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------


def _outcome_values(col: ColumnSchema, values: pd.Series) -> np.ndarray:
    if col.categories:
        lookup = {c: i for i, c in enumerate(col.categories)}
        bad = sorted(set(values) - lookup.keys())
        if bad:
            raise ValueError(f"column {col.name!r}: unknown outcome value(s) {bad[:5]}")
        return values.map(lookup).to_numpy(dtype=np.int64)
    try:
        num = values.astype(float).to_numpy()
    except ValueError as exc:
        raise ValueError(f"column {col.name!r}: outcome is not numeric") from exc
    uniq = set(np.unique(num))
    if uniq <= {0.0, 1.0}:
        return num.astype(np.int64)
    if uniq <= {-1.0, 1.0}:
        return (num > 0).astype(np.int64)
    raise ValueError(f"column {col.name!r}: outcome must be binary, got {sorted(uniq)[:5]}")


def load_csv(path: str | Path, schema: Sequence[ColumnSchema], standardize: bool = True) -> TabularDataset:
    """Read a headed, comma-delimited UTF-8 CSV into a :class:`TabularDataset`.

    A row is dropped when any of its cells is empty or ``"?"``, including cells
    in columns the schema does not use. Non-sensitive categoricals are one-hot
    encoded over the schema's category list; sensitive ones become indices.
    With ``standardize`` the continuous columns are z-scored over the loaded
    rows (pipelines that split first should pass ``False`` and use
    :class:`Standardizer` on the training part instead).
    """
    schema = validate_schema(schema)
    frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True, encoding="utf-8")
    frame.columns = [c.strip() for c in frame.columns]
    for col in schema:
        if col.name not in frame.columns:
            raise ValueError(f"column {col.name!r} from the schema is missing in the CSV header")
    frame = frame.apply(lambda s: s.str.strip())
    missing = frame.isin(MISSING).any(axis=1).to_numpy()
    dropped = int(missing.sum())
    row_ids = np.flatnonzero(~missing)
    frame = frame.loc[~missing]
    if frame.empty:
        raise ValueError(f"{path}: no complete rows left after dropping missing entries")

    blocks, names, cont_mask, sens = [], [], [], []
    y = None
    for col in schema:
        values = frame[col.name]
        if col.kind == CONTINUOUS:
            try:
                blocks.append(values.astype(float).to_numpy()[:, None])
            except ValueError as exc:
                raise ValueError(f"column {col.name!r}: non-numeric value in continuous column") from exc
            names.append(col.name)
            cont_mask.append(True)
        elif col.kind in (CATEGORICAL, SENSITIVE):
            lookup = {c: i for i, c in enumerate(col.categories)}
            bad = sorted(set(values) - lookup.keys())
            if bad:
                raise ValueError(f"column {col.name!r}: values {bad[:5]} not among schema categories")
            codes = values.map(lookup).to_numpy(dtype=np.int64)
            if col.kind == SENSITIVE:
                sens.append(codes)
            else:
                blocks.append(np.eye(len(col.categories))[codes])
                names.extend(f"{col.name}={c}" for c in col.categories)
                cont_mask.extend([False] * len(col.categories))
        else:
            y = _outcome_values(col, values)

    n = len(frame)
    a = np.hstack(blocks) if blocks else np.zeros((n, 0))
    ds = TabularDataset(
        a=a.astype(np.float64),
        s=np.stack(sens, axis=1),
        y=y,
        schema=schema,
        feature_names=tuple(names),
        continuous=np.array(cont_mask, dtype=bool),
        row_ids=row_ids,
        dropped_rows=dropped,
    )
    logger.info("loaded %s: %d rows kept, %d dropped", path, n, dropped)
    if standardize:
        ds = Standardizer.fit(ds).transform(ds)
    return ds


@dataclass(frozen=True)
class Standardizer:
    """Per-column z-scoring for the continuous block, frozen after ``fit``."""

    mean: np.ndarray
    scale: np.ndarray
    mask: np.ndarray

    @classmethod
    def fit(cls, ds: TabularDataset) -> Standardizer:
        mean = np.zeros(ds.p_a)
        scale = np.ones(ds.p_a)
        cols = ds.a[:, ds.continuous]
        mean[ds.continuous] = cols.mean(axis=0)
        sd = cols.std(axis=0)
        scale[ds.continuous] = np.where(sd > 0, sd, 1.0)
        return cls(mean, scale, ds.continuous.copy())

    def transform(self, ds: TabularDataset) -> TabularDataset:
        a = ds.a.copy()
        a[:, self.mask] = (a[:, self.mask] - self.mean[self.mask]) / self.scale[self.mask]
        return replace(ds, a=a)


# ---------------------------------------------------------------------------
# Subgroups
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SubgroupIndex:
    """Rows grouped by sensitive combination (optionally also by outcome)."""

    groups: dict[tuple[int, ...], np.ndarray]
    by_outcome: bool
    n: int
    labels: np.ndarray = field(repr=False)  # per-row ordinal into ``keys``

    @property
    def keys(self) -> list[tuple[int, ...]]:
        return list(self.groups)

    @property
    def sizes(self) -> dict[tuple[int, ...], int]:
        return {k: len(v) for k, v in self.groups.items()}

    @property
    def K(self) -> int:
        if self.by_outcome:
            return len({k[:-1] for k in self.groups})
        return len(self.groups)


def subgroup_index(s: np.ndarray, y: np.ndarray | None = None) -> SubgroupIndex:
    """Index rows of ``s`` (n x p_S category indices), crossed with ``y`` if given."""
    s = np.asarray(s)
    if s.ndim == 1:
        s = s[:, None]
    rows = s if y is None else np.column_stack([s, np.asarray(y)])
    if len(rows) == 0:
        return SubgroupIndex({}, y is not None, 0, np.zeros(0, dtype=np.int64))
    if np.issubdtype(rows.dtype, np.integer) and rows.min() >= 0:
        # mixed-radix codes sort like the rows, and 1-d unique is much cheaper
        dims = tuple(int(d) for d in rows.max(axis=0) + 1)
        codes, inverse = np.unique(np.ravel_multi_index(tuple(rows.T), dims), return_inverse=True)
        uniq = np.column_stack(np.unravel_index(codes, dims))
    else:
        uniq, inverse = np.unique(rows, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    order = np.argsort(inverse, kind="stable")
    bounds = np.searchsorted(inverse[order], np.arange(len(uniq) + 1))
    groups = {
        tuple(int(v) for v in key): order[bounds[i] : bounds[i + 1]]
        for i, key in enumerate(uniq)
    }
    return SubgroupIndex(groups, y is not None, len(rows), inverse)


def build_subgroup_index(ds: TabularDataset, by_outcome: bool = False) -> SubgroupIndex:
    if ds.n == 0:
        raise ValueError("cannot index an empty dataset")
    return subgroup_index(ds.s, ds.y if by_outcome else None)


# ---------------------------------------------------------------------------
# Partitioning and splitting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PartitionPlan:
    """How to deal rows out to clients.

    ``attribute-skewed`` mode needs ``strata`` (names of sensitive columns whose
    category combinations define the strata, in row-major order) and
    ``skew_spec`` with one row of stratum weights per client.
    """

    client_count: int
    mode: str = "homogeneous"
    skew_spec: tuple[tuple[float, ...], ...] | None = None
    strata: tuple[str, ...] = ()
    seed: int = 0


def _largest_remainder(total: int, weights: np.ndarray) -> np.ndarray:
    weights = np.asarray(weights, dtype=float)
    if weights.sum() <= 0:
        weights = np.ones_like(weights)
    raw = total * weights / weights.sum()
    out = np.floor(raw).astype(np.int64)
    short = total - out.sum()
    if short:
        # stable tie-break on index keeps this deterministic
        order = np.lexsort((np.arange(len(raw)), -(raw - out)))
        out[order[:short]] += 1
    return out


def _strata_codes(ds: TabularDataset, strata: Sequence[str]) -> tuple[np.ndarray, int]:
    sens = ds.sensitive_columns
    names = [c.name for c in sens]
    cols, dims = [], []
    for name in strata:
        if name not in names:
            raise ValueError(f"stratum column {name!r} is not a sensitive column")
        j = names.index(name)
        cols.append(ds.s[:, j])
        dims.append(len(sens[j].categories))
    return np.ravel_multi_index(tuple(cols), tuple(dims)), int(np.prod(dims))


def partition(ds: TabularDataset, plan: PartitionPlan) -> list[TabularDataset]:
    if plan.client_count < 2:
        raise ValueError("partition needs at least 2 clients")
    rng = np.random.default_rng(plan.seed)
    if plan.mode == "homogeneous":
        perm = rng.permutation(ds.n)
        parts = [np.sort(p) for p in np.array_split(perm, plan.client_count)]
    elif plan.mode == "attribute-skewed":
        parts = _skewed_parts(ds, plan, rng)
    else:
        raise ValueError(f"unknown partition mode {plan.mode!r}")
    for c, idx in enumerate(parts):
        present = set(np.unique(ds.y[idx]).tolist())
        if present != {0, 1}:
            lacking = sorted({0, 1} - present)
            raise ValueError(f"client {c} would receive no samples with outcome {lacking}")
    return [ds.take(idx) for idx in parts]


def _skewed_parts(ds: TabularDataset, plan: PartitionPlan, rng: np.random.Generator) -> list[np.ndarray]:
    if plan.skew_spec is None or not plan.strata:
        raise ValueError("attribute-skewed partition needs skew_spec and strata")
    codes, n_strata = _strata_codes(ds, plan.strata)
    w = np.asarray(plan.skew_spec, dtype=float)
    if w.shape != (plan.client_count, n_strata):
        raise ValueError(f"skew_spec must have shape ({plan.client_count}, {n_strata}), got {w.shape}")
    if (w < 0).any() or not np.allclose(w.sum(axis=1), 1.0, atol=1e-9):
        raise ValueError("each skew_spec row must be a probability distribution")
    counts = np.bincount(codes, minlength=n_strata)
    # client masses pi so that client compositions reproduce the weights: W^T pi = stratum shares
    pi, _ = nnls(w.T, counts / ds.n)
    parts: list[list[np.ndarray]] = [[] for _ in range(plan.client_count)]
    for j in range(n_strata):
        rows = rng.permutation(np.flatnonzero(codes == j))
        if len(rows) == 0:
            continue
        share = w[:, j] * pi
        alloc = _largest_remainder(len(rows), share if share.sum() > 0 else pi)
        start = 0
        for c, k in enumerate(alloc):
            parts[c].append(rows[start : start + k])
            start += k
    return [np.sort(np.concatenate(p)) if p else np.zeros(0, dtype=np.int64) for p in parts]


def split_train_val_test(
    ds: TabularDataset, ratios: tuple[float, float, float] = (0.7, 0.1, 0.2), seed: int = 0
) -> tuple[TabularDataset, TabularDataset, TabularDataset]:
    """Outcome-stratified split; every split's prevalence is within one row of the whole."""
    ratios = np.asarray(ratios, dtype=float)
    if len(ratios) != 3 or (ratios <= 0).any() or abs(ratios.sum() - 1.0) > 1e-9:
        raise ValueError(f"ratios must be three positive numbers summing to 1, got {ratios.tolist()}")
    sizes = _largest_remainder(ds.n, ratios)
    if (sizes < 1).any():
        raise ValueError(f"split sizes {sizes.tolist()} leave an empty split")
    rng = np.random.default_rng(seed)
    # interleave classes so that every prefix of ``order`` is near-proportional
    keys = np.empty(ds.n)
    for c in np.unique(ds.y):
        rows = np.flatnonzero(ds.y == c)
        keys[rng.permutation(rows)] = (np.arange(len(rows)) + 0.5) / len(rows)
    order = np.lexsort((ds.y, keys))
    cuts = np.cumsum(sizes)[:-1]
    return tuple(ds.take(np.sort(part)) for part in np.split(order, cuts))  # type: ignore[return-value]


class Splits(NamedTuple):
    train: TabularDataset
    val: TabularDataset
    test: TabularDataset


def split_clients(parts: Sequence[TabularDataset], ratios: tuple[float, float, float] = (0.7, 0.1, 0.2),
                  seed: int = 0, standardize: bool = True) -> list[Splits]:
    """Split every client and z-score each client with its own training statistics."""
    out = []
    for k, part in enumerate(parts):
        tr, va, te = split_train_val_test(part, ratios, seed=int(np.random.SeedSequence([seed, k]).generate_state(1)[0]))
        if standardize:
            st = Standardizer.fit(tr)
            tr, va, te = st.transform(tr), st.transform(va), st.transform(te)
        out.append(Splits(tr, va, te))
    return out


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for an imbalanced synthetic cohort.

    ``prevalences`` lists the share of each sensitive combination in row-major
    order over ``levels``. Features of a subgroup are Gaussian around that
    subgroup's mean; outcomes follow ``sigmoid(a @ coefficients + intercept +
    logit_shift[g])``.
    """

    prevalences: tuple[float, ...]
    coefficients: tuple[float, ...]
    n: int = 1000
    levels: tuple[int, ...] = (2, 2)
    noise_scale: float = 1.0
    group_shift: float = 1.0
    group_means: tuple[tuple[float, ...], ...] | None = None
    logit_shift: tuple[float, ...] | None = None
    intercept: float = 0.0
    seed: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> SyntheticSpec:
        d = dict(d)
        for key in ("prevalences", "coefficients", "levels", "logit_shift"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        if d.get("group_means") is not None:
            d["group_means"] = tuple(tuple(r) for r in d["group_means"])
        return cls(**d)


def generate_synthetic(spec: SyntheticSpec) -> TabularDataset:
    prev = np.asarray(spec.prevalences, dtype=float)
    n_groups = int(np.prod(spec.levels))
    if len(prev) != n_groups:
        raise ValueError(f"need {n_groups} prevalences for levels {spec.levels}, got {len(prev)}")
    if ((prev <= 0) | (prev >= 1)).any():
        raise ValueError("every subgroup prevalence must lie in (0, 1)")
    if abs(prev.sum() - 1.0) > 1e-6:
        raise ValueError(f"prevalences sum to {prev.sum():.6f}, expected 1")
    if spec.n < 50:
        raise ValueError("synthetic datasets need n >= 50")
    beta = np.asarray(spec.coefficients, dtype=float)
    p = len(beta)
    rng = np.random.default_rng(spec.seed)
    if spec.group_means is None:
        means = spec.group_shift * rng.standard_normal((n_groups, p))
    else:
        means = np.asarray(spec.group_means, dtype=float)
        if means.shape != (n_groups, p):
            raise ValueError(f"group_means must have shape ({n_groups}, {p})")
    shift = np.zeros(n_groups) if spec.logit_shift is None else np.asarray(spec.logit_shift, dtype=float)

    counts = rng.multinomial(spec.n, prev / prev.sum())
    g = np.repeat(np.arange(n_groups), counts)
    a = means[g] + spec.noise_scale * rng.standard_normal((spec.n, p))
    logits = a @ beta + spec.intercept + shift[g]
    y = (rng.random(spec.n) < 1.0 / (1.0 + np.exp(-logits))).astype(np.int64)
    s = np.stack(np.unravel_index(g, spec.levels), axis=1).astype(np.int64)

    schema = tuple(ColumnSchema(f"x{j}", CONTINUOUS) for j in range(p))
    schema += tuple(
        ColumnSchema(f"s{j}", SENSITIVE, tuple(str(c) for c in range(k))) for j, k in enumerate(spec.levels)
    )
    schema += (ColumnSchema("y", OUTCOME, ("0", "1")),)
    return TabularDataset(
        a=a,
        s=s,
        y=y,
        schema=schema,
        feature_names=tuple(f"x{j}" for j in range(p)),
        continuous=np.ones(p, dtype=bool),
        row_ids=np.arange(spec.n),
    )


# ---------------------------------------------------------------------------
# JSON-lines snapshots
# ---------------------------------------------------------------------------


def write_jsonl(ds: TabularDataset, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        header = {
            "schema": [c.to_dict() for c in ds.schema],
            "feature_names": list(ds.feature_names),
            "continuous": ds.continuous.tolist(),
            "dropped_rows": ds.dropped_rows,
        }
        fh.write(json.dumps(header) + "\n")
        for i in range(ds.n):
            row = {"id": int(ds.row_ids[i]), "a": ds.a[i].tolist(), "s": ds.s[i].tolist(), "y": int(ds.y[i])}
            fh.write(json.dumps(row) + "\n")


def read_jsonl(path: str | Path) -> TabularDataset:
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        rows = [json.loads(line) for line in fh if line.strip()]
    p = len(header["feature_names"])
    p_s = sum(c["kind"] == SENSITIVE for c in header["schema"])
    return TabularDataset(
        a=np.array([r["a"] for r in rows], dtype=float).reshape(len(rows), p),
        s=np.array([r["s"] for r in rows], dtype=np.int64).reshape(len(rows), p_s),
        y=np.array([r["y"] for r in rows], dtype=np.int64),
        schema=tuple(ColumnSchema.from_dict(c) for c in header["schema"]),
        feature_names=tuple(header["feature_names"]),
        continuous=np.array(header["continuous"], dtype=bool),
        row_ids=np.array([r["id"] for r in rows], dtype=np.int64),
        dropped_rows=header["dropped_rows"],
    )
