"""Config-driven experiment pipelines behind the ``fedida`` command.

One JSON file describes a whole experiment: dataset, partition, federation
settings, the FedIDA objective, tuning ranges, evaluation options and where to
write results. Every pipeline writes its artifacts through :class:`Artifacts`,
which records a content hash per file in ``manifest.json``. No timestamps or
host details are written, so a rerun with the same config is byte-identical.

Relative paths inside a config are resolved against the config file's folder.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__, data, metrics
from .data import PartitionPlan, Splits, SyntheticSpec, TabularDataset
from .evaluation import SUMMARY_METRICS, EvalConfig, Summary, evaluate_clients, summarize_reports
from .federated import STRATEGIES, FederationConfig, FederationResult, predict_proba, run_federation
from .penalty import PenaltyConfig
from .rose import RoseConfig
from .tuning import LambdaSearchConfig, combine_lambda, fedida_full, search_lambda_local

logger = logging.getLogger(__name__)

OUTPUT_ENV = "FEDIDA_OUTPUT_DIR"
DEFAULT_OUTPUT = "fedida_runs"
FEDIDA_PREFIX = "fedida-"
MIN_REPLICATES = 10
VARIANCE_METRICS = ("dpd", "dpr", "dfpr", "dppv")


class ConfigError(ValueError):
    """The experiment config is malformed or inconsistent."""


# ---------------------------------------------------------------------------
# Config
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    raw: dict
    base_dir: Path
    seed: int
    dataset: dict
    partition: PartitionPlan
    splits: tuple[float, float, float]
    federation: FederationConfig
    fedida_penalty: PenaltyConfig
    fedida_rose: RoseConfig | None
    setups: tuple[str, ...]
    lambda_search: LambdaSearchConfig
    lambda_count: int
    gamma_range: tuple[float, float]
    gamma_m: int
    gamma_m_refined: int
    evaluation: EvalConfig
    bootstrap_replicates: int
    stratified_bootstrap: bool
    ablation_lambdas: tuple[float, ...]
    ablation_oversampling: tuple[bool, ...]
    output_dir: str | None = None

    @property
    def hash(self) -> str:
        return config_hash(self.raw)

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p


def config_hash(raw: dict) -> str:
    canonical = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def _section(raw: dict, key: str) -> dict:
    value = raw.get(key, {})
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"'{key}' must be an object")
    return value


def parse_config(raw: dict, base_dir: str | Path = ".", seed: int | None = None) -> ExperimentConfig:
    """Validate a config mapping; every problem surfaces as :class:`ConfigError`."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    if seed is not None:
        raw = dict(raw, seed=int(seed))
    try:
        return _parse(raw, Path(base_dir))
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


def _parse(raw: dict, base_dir: Path) -> ExperimentConfig:
    seed = int(raw.get("seed", 0))
    dataset = _section(raw, "dataset")
    kind = dataset.get("kind")
    if kind not in ("adult-csv", "synthetic"):
        raise ConfigError("dataset.kind must be 'adult-csv' or 'synthetic'")
    if kind == "synthetic":
        SyntheticSpec.from_dict(dict(dataset.get("spec", {}), seed=seed))
    elif "path" not in dataset or "schema" not in dataset:
        raise ConfigError("adult-csv datasets need 'path' and 'schema'")

    part = _section(raw, "partition")
    clients = int(part.get("clients", 5))
    skew = part.get("skew_spec")
    plan = PartitionPlan(
        client_count=clients,
        mode=part.get("mode", "homogeneous"),
        skew_spec=None if skew is None else tuple(tuple(float(x) for x in r) for r in skew),
        strata=tuple(part.get("strata", ())),
        seed=seed,
    )
    if plan.mode not in ("homogeneous", "attribute-skewed"):
        raise ConfigError(f"unknown partition mode {plan.mode!r}")
    if clients < 1:
        raise ConfigError("partition.clients must be >= 1")
    splits = tuple(float(x) for x in raw.get("splits", (0.7, 0.1, 0.2)))
    if len(splits) != 3 or min(splits) <= 0 or abs(sum(splits) - 1) > 1e-9:
        raise ConfigError("splits must be three positive numbers summing to 1")

    fed = _section(raw, "federation")
    epochs = fed.get("local_epochs", 5)
    fedida = _section(raw, "fedida")
    penalty = PenaltyConfig.from_dict(fedida.get("penalty", {}))
    rose_raw = fedida.get("rose", {})
    rose = None if rose_raw is None else RoseConfig.from_dict(dict(rose_raw, seed=seed))
    federation = FederationConfig(
        strategy="fedavg",
        clients=clients,
        rounds=int(fed.get("rounds", 10)),
        local_epochs=int(epochs) if isinstance(epochs, (int, float)) else tuple(int(e) for e in epochs),
        batch_size=int(fed.get("batch_size", 128)),
        lr=float(fed.get("lr", 0.1)),
        personalization_steps=int(fed.get("personalization_steps", 1)),
        model=fed.get("model", "linear"),
        hidden=int(fed.get("hidden", 100)),
        seed=seed,
        workers=int(fed.get("workers", 1)),
        penalty=replace(penalty, lam=0.0, gamma=0.0),
    )
    if federation.model not in ("linear", "fcnn"):
        raise ConfigError(f"unknown model {federation.model!r}")
    if federation.rounds < 1:
        raise ConfigError("federation.rounds must be >= 1")

    setups = tuple(raw.get("setups", ("fedavg", "fedida-fedavg")))
    for s in setups:
        if s.removeprefix(FEDIDA_PREFIX) not in STRATEGIES:
            raise ConfigError(f"unknown setup {s!r}")

    tuner = _section(raw, "tuner")
    lam_raw = _section(tuner, "lambda")
    lam_cfg = LambdaSearchConfig(
        grid=tuple(float(x) for x in lam_raw.get("grid", LambdaSearchConfig.grid)),
        degradation_factor=float(lam_raw.get("degradation_factor", 0.995)),
        epochs=int(lam_raw.get("epochs", 1)),
    )
    gam_raw = _section(tuner, "gamma")
    g_range = tuple(float(x) for x in gam_raw.get("range", (0.0001, 0.1)))
    if len(g_range) != 2 or not 0 <= g_range[0] < g_range[1]:
        raise ConfigError("tuner.gamma.range must be [lo, hi] with 0 <= lo < hi")

    ev = _section(raw, "evaluation")
    evaluation = EvalConfig(
        threshold=float(ev.get("threshold", 0.5)),
        min_group_size=int(ev.get("min_group_size", metrics.DEFAULT_MIN_GROUP_SIZE)),
        mode=ev.get("metric_mode", metrics.HARD),
    )
    abl = _section(raw, "ablation")
    lambdas = tuple(float(x) for x in abl.get("lambdas", (penalty.lam,)))
    if any(not math.isfinite(x) or x < 0 for x in lambdas):
        raise ConfigError("ablation lambdas must be finite and >= 0")

    return ExperimentConfig(
        raw=raw,
        base_dir=base_dir,
        seed=seed,
        dataset=dataset,
        partition=plan,
        splits=splits,  # type: ignore[arg-type]
        federation=federation,
        fedida_penalty=penalty,
        fedida_rose=rose,
        setups=setups,
        lambda_search=lam_cfg,
        lambda_count=int(lam_raw.get("count", 4)),
        gamma_range=g_range,  # type: ignore[arg-type]
        gamma_m=int(gam_raw.get("m", 10)),
        gamma_m_refined=int(gam_raw.get("m_refined", 10)),
        evaluation=evaluation,
        bootstrap_replicates=int(ev.get("bootstrap_replicates", 30)),
        stratified_bootstrap=bool(ev.get("stratified", True)),
        ablation_lambdas=lambdas,
        ablation_oversampling=tuple(bool(x) for x in abl.get("oversampling", (True, False))),
        output_dir=raw.get("output_dir"),
    )


def load_config(path: str | Path, seed: int | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return parse_config(raw, path.resolve().parent, seed)


def output_dir_for(cfg: ExperimentConfig, override: str | None = None) -> Path:
    if override:
        return Path(override)
    if cfg.output_dir:
        return cfg.resolve(cfg.output_dir)
    return Path(os.environ.get(OUTPUT_ENV, DEFAULT_OUTPUT))


# ---------------------------------------------------------------------------
# Data and setups
# ---------------------------------------------------------------------------


def load_dataset(cfg: ExperimentConfig) -> TabularDataset:
    if cfg.dataset["kind"] == "synthetic":
        return data.generate_synthetic(SyntheticSpec.from_dict(dict(cfg.dataset.get("spec", {}), seed=cfg.seed)))
    for key in ("path", "schema"):
        if not cfg.resolve(cfg.dataset[key]).exists():
            raise ConfigError(f"dataset {key} not found: {cfg.resolve(cfg.dataset[key])}")
    schema = data.load_schema(cfg.resolve(cfg.dataset["schema"]))
    return data.load_csv(cfg.resolve(cfg.dataset["path"]), schema, standardize=False)


def load_clients(cfg: ExperimentConfig) -> list[Splits]:
    ds = load_dataset(cfg)
    parts = [ds] if cfg.partition.client_count == 1 else data.partition(ds, cfg.partition)
    return data.split_clients(parts, cfg.splits, seed=cfg.seed)


def setup_config(cfg: ExperimentConfig, setup: str, lam: float | None = None, gamma: float | None = None,
                 oversample: bool | None = None) -> FederationConfig:
    """Federation settings for a named setup such as ``pfedavg`` or ``fedida-fedavg``."""
    strategy = setup.removeprefix(FEDIDA_PREFIX)
    fed = replace(cfg.federation, strategy=strategy)
    if not setup.startswith(FEDIDA_PREFIX):
        return fed
    pen = cfg.fedida_penalty
    pen = replace(pen, lam=pen.lam if lam is None else lam, gamma=pen.gamma if gamma is None else gamma)
    use_rose = cfg.fedida_rose is not None if oversample is None else oversample
    rose = (cfg.fedida_rose or RoseConfig(seed=cfg.seed)) if use_rose else None
    return replace(fed, penalty=pen, rose=rose)


# ---------------------------------------------------------------------------
# Artifacts
# ---------------------------------------------------------------------------


def _num(x):
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return None if math.isnan(x) else x
    return x


def _csv_text(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for r in rows:
        w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for v in r])
    return buf.getvalue()


class Artifacts:
    """Writes files under one folder and keeps the manifest in sync."""

    def __init__(self, root: Path, cfg: ExperimentConfig, command: str):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.cfg = cfg
        self.command = command
        self.files: dict[str, str] = {}
        self.commands = [command]
        previous = self.root / "manifest.json"
        if previous.exists():
            # keep earlier commands' artifacts listed when they came from the same config
            old = json.loads(previous.read_text(encoding="utf-8"))
            if old.get("config_hash") == cfg.hash:
                self.files = {k: v for k, v in old.get("artifacts", {}).items() if (self.root / k).exists()}
                self.commands = [c for c in old.get("commands", []) if c != command] + [command]
        (self.root / "FAILED").unlink(missing_ok=True)

    def write_text(self, rel: str, text: str) -> Path:
        path = self.root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8", newline="")
        self.files[rel] = hashlib.sha256(text.encode()).hexdigest()
        return path

    def write_json(self, rel: str, obj) -> Path:
        return self.write_text(rel, json.dumps(obj, indent=2, sort_keys=False) + "\n")

    def write_jsonl(self, rel: str, rows) -> Path:
        return self.write_text(rel, "".join(json.dumps(r) + "\n" for r in rows))

    def write_csv(self, rel: str, header: list[str], rows: list[list]) -> Path:
        return self.write_text(rel, _csv_text(header, rows))

    def finish(self, status: str = "ok", error: str | None = None) -> None:
        if error is not None:
            (self.root / "FAILED").write_text(error + "\n", encoding="utf-8")
        manifest = {
            "command": self.command,
            "commands": self.commands,
            "status": status,
            "version": __version__,
            "config_hash": self.cfg.hash,
            "seed": self.cfg.seed,
            "seeds": {"partition": self.cfg.partition.seed, "federation": self.cfg.federation.seed,
                      "oversampling": None if self.cfg.fedida_rose is None else self.cfg.fedida_rose.seed},
            "artifacts": dict(sorted(self.files.items())),
        }
        if error is not None:
            manifest["error"] = error
        (self.root / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Results tables
# ---------------------------------------------------------------------------


def summary_row(summaries: dict[str, Summary]) -> list:
    row = []
    for m in SUMMARY_METRICS:
        s = summaries[m]
        row += [_num(s.mean), _num(s.sd), _num(s.ci_low), _num(s.ci_high)]
    return row


SUMMARY_HEADER = [f"{m}_{part}" for m in SUMMARY_METRICS for part in ("mean", "sd", "ci95_low", "ci95_high")]


def summary_json(summaries: dict[str, Summary]) -> dict:
    return {m: {"mean": _num(s.mean), "sd": _num(s.sd), "ci95_normal": [_num(s.ci_low), _num(s.ci_high)],
                "clients": s.count} for m, s in summaries.items()}


@dataclass
class SetupRun:
    setup: str
    fed: FederationConfig
    result: FederationResult
    reports: list = field(default_factory=list)


def run_setup(cfg: ExperimentConfig, clients: list[Splits], setup: str, **overrides) -> SetupRun:
    fed = setup_config(cfg, setup, **overrides)
    result = run_federation([c.train for c in clients], fed)
    prov = {"setup": setup, "model": fed.model, "metric_mode": cfg.evaluation.mode}
    reports = evaluate_clients(result, [c.test for c in clients], cfg.evaluation, prov)
    return SetupRun(setup, fed, result, reports)


def _parallel(fn, items, workers: int):
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_run(cfg: ExperimentConfig, out: Artifacts) -> list[SetupRun]:
    """Train and evaluate every configured setup."""
    clients = load_clients(cfg)
    runs = [run_setup(cfg, clients, s) for s in cfg.setups]
    out.write_json("config.json", cfg.raw)
    rows, table = [], []
    report_lines, trace_lines, plot_rows = [], [], []
    for run in runs:
        summ = summarize_reports(run.reports)
        rows.append([run.setup, run.fed.model, len(run.reports)] + summary_row(summ))
        table.append({"setup": run.setup, "model": run.fed.model, "clients": len(run.reports),
                      "federation": run.fed.to_dict(), "metrics": summary_json(summ)})
        for rep in run.reports:
            d = rep.to_dict()
            report_lines.append({k: _num(v) for k, v in d.items()})
            for m in SUMMARY_METRICS:
                plot_rows.append([run.setup, run.fed.model, d["client"], m, _num(rep.metric(m))])
        for tr in run.result.traces:
            trace_lines.append(dict(setup=run.setup, **tr.to_dict()))
        params = {"global": None if run.result.global_params is None else run.result.global_params.to_dict()}
        if run.result.client_params is not None:
            params["clients"] = [p.to_dict() for p in run.result.client_params]
        if run.result.personalized is not None:
            params["personalized"] = [p.to_dict() for p in run.result.personalized]
        out.write_json(f"params/{run.setup}.json", params)
    out.write_csv("results.csv", ["setup", "model", "clients"] + SUMMARY_HEADER, rows)
    out.write_json("results.json", {"metric_mode": cfg.evaluation.mode, "threshold": cfg.evaluation.threshold,
                                    "sd": "sample sd over clients (ddof=1)",
                                    "ci": "normal approximation, mean +/- 1.96 sd/sqrt(clients)",
                                    "rows": table})
    out.write_jsonl("client_reports.jsonl", report_lines)
    out.write_jsonl("traces.jsonl", trace_lines)
    out.write_csv("plot_data.csv", ["setup", "model", "client", "metric", "value"], plot_rows)
    return runs


def cmd_tune_lambda(cfg: ExperimentConfig, out: Artifacts) -> dict:
    clients = load_clients(cfg)
    base = setup_config(cfg, "fedida-fedavg")
    per_client = [search_lambda_local(c.train, c.val, base, cfg.lambda_search, k) for k, c in enumerate(clients)]
    candidates = combine_lambda([r.lam for r in per_client], cfg.lambda_count)
    report = {"search": cfg.lambda_search.to_dict(), "per_client": [r.to_dict() for r in per_client],
              "lambda_max": min(r.lam for r in per_client), "candidates": candidates}
    out.write_json("tuning_lambda.json", report)
    return report


def cmd_tune_gamma(cfg: ExperimentConfig, out: Artifacts) -> dict:
    clients = load_clients(cfg)
    setups = [s for s in cfg.setups if s.startswith(FEDIDA_PREFIX)] or ["fedida-fedavg"]
    report = {"range": list(cfg.gamma_range), "m": cfg.gamma_m, "m_refined": cfg.gamma_m_refined,
              "metric_mode": cfg.evaluation.mode, "setups": {}}
    for setup in setups:
        base = setup_config(cfg, setup)
        res = fedida_full(clients, base, cfg.fedida_penalty.lam, cfg.gamma_range, cfg.gamma_m,
                          cfg.gamma_m_refined, cfg.evaluation, workers=cfg.federation.workers)
        report["setups"][setup] = res.to_dict()
    out.write_json("tuning_gamma.json", report)
    return report


def bootstrap_indices(index: data.SubgroupIndex, replicates: int, rng: np.random.Generator,
                      stratified: bool = True) -> list[np.ndarray]:
    """Resampled row sets: within every subgroup (keeping its size) or over all rows."""
    out = []
    for _ in range(replicates):
        if stratified:
            out.append(np.concatenate([rng.choice(rows, size=len(rows), replace=True)
                                       for rows in index.groups.values()]))
        else:
            out.append(rng.integers(index.n, size=index.n))
    return out


def variance_study(models: dict[str, object], test: TabularDataset, replicates: int, eval_cfg: EvalConfig,
                   seed: int = 0, stratified: bool = True) -> dict:
    """Per-replicate fairness metrics for each model on shared bootstrap test sets."""
    if replicates < MIN_REPLICATES:
        raise ConfigError(f"variance study needs at least {MIN_REPLICATES} bootstrap replicates, got {replicates}")
    index = data.build_subgroup_index(test)
    draws = bootstrap_indices(index, replicates, np.random.default_rng([seed, replicates]), stratified)
    probs = {name: predict_proba(p, test.a) for name, p in models.items()}
    per_model = {}
    for name, pr in probs.items():
        values = {m: [] for m in VARIANCE_METRICS}
        for idx in draws:
            sub = test.take(idx)
            rep = metrics.fairness_report(pr[idx], sub.y, data.build_subgroup_index(sub), eval_cfg.threshold,
                                          eval_cfg.mode, eval_cfg.min_group_size)
            for m in VARIANCE_METRICS:
                values[m].append(rep.metric(m))
        per_model[name] = values
    return per_model


def _variance(xs) -> float:
    v = np.asarray([x for x in xs if not math.isnan(x)], dtype=np.float64)
    return float(v.var(ddof=1)) if len(v) > 1 else float("nan")


def cmd_variance_study(cfg: ExperimentConfig, out: Artifacts, replicates: int | None = None) -> dict:
    """Bootstrap variance of fairness metrics, FedAvg baseline vs FedIDA(FedAvg)."""
    replicates = cfg.bootstrap_replicates if replicates is None else replicates
    if replicates < MIN_REPLICATES:
        raise ConfigError(f"variance study needs at least {MIN_REPLICATES} bootstrap replicates, got {replicates}")
    clients = load_clients(cfg)
    runs = {s: run_setup(cfg, clients, s) for s in ("fedavg", "fedida-fedavg")}
    test = data.concat([c.test for c in clients])
    per_model = variance_study({"baseline": runs["fedavg"].result.global_params,
                                "fedida": runs["fedida-fedavg"].result.global_params},
                               test, replicates, cfg.evaluation, cfg.seed, cfg.stratified_bootstrap)
    variances = {name: {m: _num(_variance(v)) for m, v in vals.items()} for name, vals in per_model.items()}
    diff = {m: _num(variances["fedida"][m] - variances["baseline"][m])
            if variances["fedida"][m] is not None and variances["baseline"][m] is not None else None
            for m in VARIANCE_METRICS}
    report = {"replicates": replicates, "stratified": cfg.stratified_bootstrap, "metric_mode": cfg.evaluation.mode,
              "variance": "sample variance over replicates (ddof=1)", "variances": variances,
              "difference_fedida_minus_baseline": diff}
    rows = [[name, r, m, _num(vals[m][r])] for name, vals in per_model.items()
            for r in range(replicates) for m in VARIANCE_METRICS]
    out.write_json("variance_study.json", report)
    out.write_csv("variance_replicates.csv", ["model", "replicate", "metric", "value"], rows)
    return report


def ablation_cells(lambdas, oversampling) -> list[tuple[str, float, bool]]:
    """(variant, lambda, oversampling) rows: baseline, fairness-only, oversampling-only, FedIDA."""
    positive = sorted({float(x) for x in lambdas if x > 0})
    cells = [("baseline", 0.0, False)]
    if False in oversampling:
        cells += [("fairness-only", lam, False) for lam in positive]
    if True in oversampling:
        cells.append(("oversampling-only", 0.0, True))
        cells += [("fedida", lam, True) for lam in positive]
    return cells


def cmd_ablation(cfg: ExperimentConfig, out: Artifacts) -> list[dict]:
    clients = load_clients(cfg)
    cells = ablation_cells(cfg.ablation_lambdas, cfg.ablation_oversampling)

    def run(cell):
        variant, lam, os_ = cell
        if variant == "baseline":
            return run_setup(cfg, clients, "fedavg")
        return run_setup(cfg, clients, "fedida-fedavg", lam=lam, oversample=os_)

    runs = _parallel(run, cells, cfg.federation.workers)
    rows, table = [], []
    for (variant, lam, os_), r in zip(cells, runs):
        summ = summarize_reports(r.reports)
        rows.append([variant, lam, os_, r.fed.penalty.gamma] + summary_row(summ))
        table.append({"variant": variant, "lambda": lam, "oversampling": os_, "gamma": r.fed.penalty.gamma,
                      "metrics": summary_json(summ)})
    out.write_csv("ablation.csv", ["variant", "lambda", "oversampling", "gamma"] + SUMMARY_HEADER, rows)
    out.write_json("ablation.json", {"metric_mode": cfg.evaluation.mode, "rows": table})
    return table


def _fmt(x) -> str:
    return "   n/a" if x is None else f"{x:.3f}"


def cmd_report(cfg: ExperimentConfig, root: Path) -> str:
    """Plain-text tables from whatever artifacts exist in ``root``."""
    lines = []
    results = root / "results.json"
    if results.exists():
        doc = json.loads(results.read_text())
        lines.append(f"Results (mean (sd) over clients, {doc['metric_mode']} metrics)")
        lines.append("setup            model   " + "  ".join(f"{m:>15}" for m in SUMMARY_METRICS))
        for row in doc["rows"]:
            cells = [f"{_fmt(row['metrics'][m]['mean'])} ({_fmt(row['metrics'][m]['sd'])})" for m in SUMMARY_METRICS]
            lines.append(f"{row['setup']:<16} {row['model']:<7} " + "  ".join(f"{c:>15}" for c in cells))
        lines.append("")
    abl = root / "ablation.json"
    if abl.exists():
        doc = json.loads(abl.read_text())
        lines.append("Ablation")
        for row in doc["rows"]:
            vals = "  ".join(f"{m}={_fmt(row['metrics'][m]['mean'])}" for m in SUMMARY_METRICS)
            lines.append(f"{row['variant']:<18} lambda={row['lambda']:<4} os={str(row['oversampling']):<5} {vals}")
        lines.append("")
    lam = root / "tuning_lambda.json"
    if lam.exists():
        doc = json.loads(lam.read_text())
        lines.append(f"Lambda search: per-client {[r['lambda'] for r in doc['per_client']]} "
                     f"-> candidates {doc['candidates']}")
    gam = root / "tuning_gamma.json"
    if gam.exists():
        doc = json.loads(gam.read_text())
        for setup, r in doc["setups"].items():
            lines.append(f"Gamma search {setup}: coarse best {r['coarse_best']:.4g}, refined "
                         f"[{r['refined_grid'][0]:.4g}, {r['refined_grid'][-1]:.4g}] -> final {r['final']:.4g}")
    var = root / "variance_study.json"
    if var.exists():
        doc = json.loads(var.read_text())
        lines.append(f"Variance study ({doc['replicates']} replicates)")
        for m in VARIANCE_METRICS:
            b, f = doc["variances"]["baseline"][m], doc["variances"]["fedida"][m]
            lines.append(f"  {m:<5} baseline {b!s:<24} fedida {f!s:<24}")
    if not lines:
        raise FileNotFoundError(f"no artifacts to report in {root}")
    text = "\n".join(lines).rstrip() + "\n"
    (root / "report.txt").write_text(text, encoding="utf-8")
    return text
