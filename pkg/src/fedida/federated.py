"""In-memory federated training: local SGD, sample-weighted averaging, four setups.

Every client draws randomness from its own stream keyed by ``(seed, client,
round)``, so results do not depend on the order (or thread) in which clients
run. Clients only ever see their own :class:`TabularDataset`; the server only
sees parameters and sample counts.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import models
from .data import TabularDataset, concat
from .models import ModelParams
from .penalty import PenaltyConfig, composite_objective
from .rose import RoseConfig, fairness_aware_rose

STRATEGIES = ("central", "local", "fedavg", "pfedavg")
_PERSONALIZE_TAG = 7_919


@dataclass(frozen=True)
class FederationConfig:
    strategy: str = "fedavg"
    clients: int = 5
    rounds: int = 10
    local_epochs: int | tuple[int, ...] = 5
    batch_size: int = 128
    lr: float = 0.1
    penalty: PenaltyConfig = field(default_factory=PenaltyConfig)
    rose: RoseConfig | None = None
    personalization_steps: int = 1
    model: str = models.LINEAR
    hidden: int = models.HIDDEN_UNITS
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.rounds < 0:
            raise ValueError("rounds must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.lr > 0:
            raise ValueError("lr must be > 0")
        if not isinstance(self.local_epochs, int) and len(self.local_epochs) != self.clients:
            raise ValueError(f"local_epochs has {len(self.local_epochs)} entries for {self.clients} clients")

    def epochs_for(self, client: int) -> int:
        if isinstance(self.local_epochs, int):
            return self.local_epochs
        return int(self.local_epochs[client])

    @property
    def is_fedida(self) -> bool:
        return self.rose is not None or self.penalty.lam > 0 or self.penalty.gamma > 0

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "clients": self.clients,
            "rounds": self.rounds,
            "local_epochs": self.local_epochs if isinstance(self.local_epochs, int) else list(self.local_epochs),
            "batch_size": self.batch_size,
            "lr": self.lr,
            "penalty": self.penalty.to_dict(),
            "rose": None if self.rose is None else self.rose.to_dict(),
            "personalization_steps": self.personalization_steps,
            "model": self.model,
            "hidden": self.hidden,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class ClientTrace:
    client: int
    loss: float
    penalty: float
    n: int
    steps: int


@dataclass(frozen=True)
class RoundTrace:
    round: int
    clients: tuple[ClientTrace, ...]
    checksum: str

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "client_loss": [c.loss for c in self.clients],
            "client_penalty": [c.penalty for c in self.clients],
            "sample_counts": [c.n for c in self.clients],
            "checksum": self.checksum,
        }


@dataclass
class FederationResult:
    global_params: ModelParams | None
    client_params: list[ModelParams] | None = None
    personalized: list[ModelParams] | None = None
    traces: list[RoundTrace] = field(default_factory=list)

    def model_for(self, client: int) -> ModelParams:
        """The parameters a client is evaluated with under its strategy."""
        if self.personalized is not None:
            return self.personalized[client]
        if self.client_params is not None:
            return self.client_params[client]
        return self.global_params


def client_rng(seed: int, client: int, round_: int) -> np.random.Generator:
    return np.random.default_rng([seed, client, round_])


def _group_codes(s: np.ndarray) -> np.ndarray:
    return np.unique(s, axis=0, return_inverse=True)[1].reshape(-1)


def _step(params: ModelParams, a, y, codes, cfg: FederationConfig, rng, batch_rose: bool):
    if batch_rose:
        aug = fairness_aware_rose(a, codes, y, cfg.rose, rng)
        a, y, codes = aug.a, aug.y, codes[aug.source]
    obj = composite_objective(params, a, y, codes, cfg.penalty)
    return models.apply_update(params, obj.grad, cfg.lr), obj


def local_train(params: ModelParams, ds: TabularDataset, cfg: FederationConfig,
                client: int = 0, round_: int = 0) -> tuple[ModelParams, ClientTrace]:
    """``E_k`` epochs of shuffled mini-batch SGD on the composite objective."""
    if ds.n == 0:
        raise ValueError(f"client {client} has no training data")
    rng = client_rng(cfg.seed, client, round_)
    codes = _group_codes(ds.s)
    rose = cfg.rose
    batch_rose = rose is not None and rose.level == "batch"
    losses, pens = [], []
    for _ in range(cfg.epochs_for(client)):
        a, y, c = ds.a, ds.y, codes
        if rose is not None and rose.level == "client":
            aug = fairness_aware_rose(a, c, y, rose, rng)
            a, y, c = aug.a, aug.y, c[aug.source]
        order = rng.permutation(len(y))
        for start in range(0, len(y), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            params, obj = _step(params, a[idx], y[idx], c[idx], cfg, rng, batch_rose)
            losses.append(obj.value)
            pens.append(obj.penalty.value)
    trace = ClientTrace(
        client=client,
        loss=float(np.mean(losses)) if losses else float("nan"),
        penalty=float(np.mean(pens)) if pens else float("nan"),
        n=ds.n,
        steps=len(losses),
    )
    return params, trace


def aggregate(client_params: list[ModelParams], weights) -> ModelParams:
    """Sample-weighted mean ``sum_k (n_k / n) w_k``.

    Coordinates are summed with ``math.fsum`` so the result does not depend on
    client order.
    """
    if not client_params:
        raise ValueError("nothing to aggregate")
    weights = np.asarray(weights, dtype=np.float64)
    if len(weights) != len(client_params) or (weights <= 0).any():
        raise ValueError("need one positive weight per client")
    shapes = [x.shape for x in client_params[0].arrays]
    for p in client_params[1:]:
        if p.kind != client_params[0].kind or [x.shape for x in p.arrays] != shapes:
            raise ValueError("client parameter shapes differ")
    share = weights / math.fsum(weights)
    stacked = np.stack([p.to_vector() for p in client_params]) * share[:, None]
    return client_params[0].with_vector(np.array([math.fsum(col) for col in stacked.T]))


def personalize(params: ModelParams, ds: TabularDataset, cfg: FederationConfig, client: int) -> ModelParams:
    """A few client-side SGD steps from the global model (first-order Per-FedAvg)."""
    rng = np.random.default_rng([cfg.seed, client, _PERSONALIZE_TAG])
    codes = _group_codes(ds.s)
    batch_rose = cfg.rose is not None
    for _ in range(cfg.personalization_steps):
        idx = rng.choice(ds.n, size=min(cfg.batch_size, ds.n), replace=False)
        params, _ = _step(params, ds.a[idx], ds.y[idx], codes[idx], cfg, rng, batch_rose)
    return params


def _map(fn, items, workers: int):
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def run_federation(datasets: list[TabularDataset], cfg: FederationConfig,
                   init: ModelParams | None = None) -> FederationResult:
    """Train under ``cfg.strategy``.

    central pools all client data into one client; local trains every client
    alone for the same number of rounds; fedavg averages after each round;
    pfedavg is fedavg plus per-client fine-tuning of the final global model.
    """
    if not datasets:
        raise ValueError("need at least one client dataset")
    p = datasets[0].p_a
    params = init if init is not None else models.init_params(cfg.model, p, cfg.seed, cfg.hidden)

    if cfg.strategy == "central":
        pooled = concat(datasets)
        result = run_federation([pooled], replace(cfg, strategy="fedavg", clients=1,
                                                  local_epochs=cfg.epochs_for(0)), params)
        return result

    if cfg.strategy == "local":
        client_params = list(params for _ in datasets)
        traces = []
        for t in range(cfg.rounds):
            out = _map(lambda k: local_train(client_params[k], datasets[k], cfg, k, t), range(len(datasets)),
                       cfg.workers)
            client_params = [o[0] for o in out]
            traces.append(RoundTrace(t, tuple(o[1] for o in out), ""))
        return FederationResult(None, client_params=client_params, traces=traces)

    traces = []
    for t in range(cfg.rounds):
        current = params
        out = _map(lambda k: local_train(current, datasets[k], cfg, k, t), range(len(datasets)), cfg.workers)
        params = aggregate([o[0] for o in out], [d.n for d in datasets])
        traces.append(RoundTrace(t, tuple(o[1] for o in out), params.checksum()))

    personalized = None
    if cfg.strategy == "pfedavg":
        personalized = [personalize(params, ds, cfg, k) for k, ds in enumerate(datasets)]
    return FederationResult(params, personalized=personalized, traces=traces)


def predict_proba(params: ModelParams, a: np.ndarray) -> np.ndarray:
    return models.forward(params, a).probs
