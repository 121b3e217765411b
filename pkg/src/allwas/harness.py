"""Experiment orchestration: the labeled-pool loop across repeats,
paired sweeps, and append-safe result files.

One experiment cell = (corpus, seed setting, strategy, augmentation) run
for several repeats. Per repeat: build the labeling seed, optionally
augment the labeled set, train a fresh head, evaluate on the held-out
validation split, acquire the next batch, repeat until the budget.
Every random stage draws from a generator derived from
(master seed, repeat, iteration, stage name), so outputs are a pure
function of (config, master seed).

Results land in <out_dir>/<label>.csv with a sidecar meta file carrying
the config hash; reruns with a matching hash skip completed repeats and
recompute partial ones (deterministic replay makes that exact).
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .barysample import AugmentationConfig, augment_l2_kde, augment_wasserstein
from .data import (
    Corpus,
    FeaturizerConfig,
    SeedSpec,
    SynthSpec,
    build_seed,
    ingest_jsonl,
    make_synthetic,
    train_val_split,
)
from .errors import AllwasError, ConfigError, DataError
from .model import ClassifierHead, predict_proba_batch, train
from .seeding import derive_seed
from .stats import f1_macro, f1_target
from .strategies import STRATEGY_NAMES, OTConfig, acquire

SCHEMA_VERSION = 1
CSV_HEADER = "setting,strategy,seed,iteration,labeled,f1,seconds"

AUGMENTATION_MODES = ("none", "wasserstein", "l2-kde")


@dataclass(frozen=True)
class ExperimentConfig:
    corpus: dict
    out_dir: str
    label: str = "cell"
    setting: str = "balanced"
    seed_size: int = 25
    minority_fraction: float = 0.5
    radius_percentile: float = 10.0
    strategy: str = "random"
    budget: int = 150
    k: int = 25
    repeats: int = 5
    augmentation: dict = field(default_factory=lambda: {"mode": "none"})
    model: dict = field(default_factory=dict)
    ot: dict = field(default_factory=dict)
    metric: str = "target-f1"
    val_fraction: float = 0.2
    master_seed: int = 0
    record_timing: bool = False
    mc_passes: int = 10

    def __post_init__(self):
        if self.strategy not in STRATEGY_NAMES:
            raise ConfigError(f"unknown strategy {self.strategy!r}")
        if self.k < 1 or self.k > self.budget:
            raise ConfigError("need 1 <= k <= budget")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        if self.budget < self.seed_size:
            raise ConfigError("budget must be >= seed size")
        mode = self.augmentation.get("mode", "none")
        if mode not in AUGMENTATION_MODES:
            raise ConfigError(f"unknown augmentation mode {mode!r}")
        if self.metric not in ("target-f1", "macro-f1"):
            raise ConfigError(f"unknown metric {self.metric!r}")

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"bad config JSON: {exc}") from exc
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        missing = {"corpus", "out_dir"} - set(raw)
        if missing:
            raise ConfigError(f"missing config keys: {sorted(missing)}")
        return cls(**raw)

    def to_canonical_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_canonical_json().encode()).hexdigest()

    def iterations_per_repeat(self) -> int:
        extra = max(0, self.budget - self.seed_size)
        return 1 + -(-extra // self.k)


@dataclass(frozen=True)
class RunRow:
    setting: str
    strategy: str
    seed: int
    iteration: int
    labeled: int
    f1: float
    seconds: float

    def to_csv(self) -> str:
        # repr round-trips doubles exactly, so resumed runs reload the very
        # values they wrote.
        return (f"{self.setting},{self.strategy},{self.seed},{self.iteration},"
                f"{self.labeled},{self.f1!r},{self.seconds:.3f}")

    @classmethod
    def from_csv(cls, line: str) -> "RunRow":
        parts = line.split(",")
        return cls(parts[0], parts[1], int(parts[2]), int(parts[3]),
                   int(parts[4]), float(parts[5]), float(parts[6]))


@dataclass(frozen=True)
class RunRecord:
    label: str
    config_hash: str
    rows: tuple

    def curve(self, stat=np.mean):
        """labeled-count -> aggregated f1 across repeats."""
        by_labeled = {}
        for row in self.rows:
            by_labeled.setdefault(row.labeled, []).append(row.f1)
        return {n: float(stat(v)) for n, v in sorted(by_labeled.items())}


def load_corpus(spec: dict) -> Corpus:
    """Corpus from an experiment config's ``corpus`` entry."""
    if "synthetic" in spec:
        return make_synthetic(SynthSpec(**spec["synthetic"]))
    if "path" in spec:
        feat = spec.get("featurize")
        featurizer = FeaturizerConfig(**feat) if feat else None
        return ingest_jsonl(spec["path"], featurizer=featurizer,
                            class_names=spec.get("class_names"),
                            target_class=spec.get("target_class"))
    raise ConfigError("corpus config needs 'synthetic' or 'path'")


def _augmenter(cfg: ExperimentConfig, repeat: int, iteration: int):
    mode = cfg.augmentation.get("mode", "none")
    if mode == "none" or cfg.augmentation.get("factor", 20) == 0:
        return None
    kwargs = {k: v for k, v in cfg.augmentation.items() if k != "mode"}
    kwargs["seed"] = derive_seed(cfg.master_seed, repeat, iteration, "augment")
    aug_cfg = AugmentationConfig(**kwargs)
    fn = augment_wasserstein if mode == "wasserstein" else augment_l2_kde
    return lambda labeled: fn(labeled, aug_cfg)


def _evaluate(head: ClassifierHead, val: Corpus, metric: str) -> float:
    probs = predict_proba_batch(head, val.pooled_matrix())
    preds = probs.argmax(axis=1)
    truth = np.array([ex.label.hard for ex in val.examples])
    if metric == "macro-f1":
        return f1_macro(preds, truth, val.n_classes)
    return f1_target(preds, truth, val.target_class)


def _run_repeat(cfg: ExperimentConfig, corpus: Corpus, repeat: int):
    """Deterministic replay of one repeat; yields one row per iteration."""
    ms = cfg.master_seed
    pool_corpus, val_corpus = train_val_split(
        corpus, cfg.val_fraction, seed=derive_seed(ms, repeat, "split"))
    seed_spec = SeedSpec(
        setting=cfg.setting, seed_size=cfg.seed_size,
        seed=derive_seed(ms, repeat, "seed"),
        minority_fraction=cfg.minority_fraction,
        radius_percentile=cfg.radius_percentile)
    if cfg.budget > pool_corpus.n:
        raise ConfigError(f"budget {cfg.budget} exceeds pool of {pool_corpus.n}")
    labeled_ids, unlabeled_ids = build_seed(pool_corpus, seed_spec)

    rows = []
    iteration = 0
    while True:
        try:
            started = time.perf_counter()
            labeled_examples = [(pool_corpus[i].embedding, pool_corpus[i].label)
                                for i in labeled_ids]
            train_data = list(labeled_examples)
            augment = _augmenter(cfg, repeat, iteration)
            if augment is not None:
                train_data += [(syn.embedding, syn.label)
                               for syn in augment(labeled_examples)]
            head = ClassifierHead(
                input_dim=corpus.dim, n_classes=corpus.n_classes,
                seed=derive_seed(ms, repeat, iteration, "train"),
                **cfg.model)
            head = train(head, train_data)
            f1 = _evaluate(head, val_corpus, cfg.metric)
            seconds = time.perf_counter() - started if cfg.record_timing else 0.0
            rows.append(RunRow(cfg.setting, cfg.strategy, ms + repeat, iteration,
                               len(labeled_ids), f1, seconds))
            if len(labeled_ids) >= cfg.budget:
                break
            pool = [(i, pool_corpus[i].embedding) for i in unlabeled_ids]
            labeled = [(i, pool_corpus[i].embedding) for i in labeled_ids]
            picked = acquire(
                cfg.strategy, head, pool, labeled, cfg.k,
                seed=derive_seed(ms, repeat, iteration, "acquire"),
                ot=OTConfig(**cfg.ot), passes=cfg.mc_passes)
            picked_set = set(picked)
            labeled_ids = labeled_ids + picked
            unlabeled_ids = [i for i in unlabeled_ids if i not in picked_set]
            iteration += 1
        except AllwasError as exc:
            raise type(exc)(
                f"repeat {repeat}, iteration {iteration}: {exc}") from exc
    return rows


def _rows_path(cfg: ExperimentConfig) -> str:
    return os.path.join(cfg.out_dir, f"{cfg.label}.csv")


def _meta_path(cfg: ExperimentConfig) -> str:
    return os.path.join(cfg.out_dir, f"{cfg.label}.meta.json")


def _write_rows(cfg: ExperimentConfig, rows) -> None:
    os.makedirs(cfg.out_dir, exist_ok=True)
    tmp = _rows_path(cfg) + ".tmp"
    ordered = sorted(rows, key=lambda r: (r.seed, r.iteration))
    with open(tmp, "w", newline="") as fh:
        fh.write(CSV_HEADER + "\n")
        for row in ordered:
            fh.write(row.to_csv() + "\n")
    os.replace(tmp, _rows_path(cfg))
    with open(_meta_path(cfg), "w") as fh:
        json.dump({"config_hash": cfg.config_hash(), "schema": SCHEMA_VERSION,
                   "label": cfg.label, "config": json.loads(cfg.to_canonical_json())},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_existing(cfg: ExperimentConfig):
    path = _rows_path(cfg)
    meta = _meta_path(cfg)
    if not (os.path.exists(path) and os.path.exists(meta)):
        return []
    with open(meta) as fh:
        info = json.load(fh)
    if info.get("config_hash") != cfg.config_hash():
        raise ConfigError(
            f"existing results at {path} were produced by a different config; "
            "move them or change out_dir/label")
    with open(path) as fh:
        lines = fh.read().strip().splitlines()
    return [RunRow.from_csv(line) for line in lines[1:]]


def run_experiment(cfg: ExperimentConfig, corpus: Corpus | None = None) -> RunRecord:
    """Run (or resume) all repeats of one experiment cell."""
    if corpus is None:
        corpus = load_corpus(cfg.corpus)
    try:
        existing = _load_existing(cfg)
        per_repeat = cfg.iterations_per_repeat()
        by_repeat = {}
        for row in existing:
            by_repeat.setdefault(row.seed - cfg.master_seed, []).append(row)
        rows = []
        for repeat, got in by_repeat.items():
            if len(got) == per_repeat:
                rows.extend(got)
        done = {row.seed - cfg.master_seed for row in rows}
        for repeat in range(cfg.repeats):
            if repeat in done:
                continue
            rows.extend(_run_repeat(cfg, corpus, repeat))
            _write_rows(cfg, rows)
        _write_rows(cfg, rows)
    except AllwasError as exc:
        raise type(exc)(f"cell {cfg.label!r}: {exc}") from exc
    ordered = tuple(sorted(rows, key=lambda r: (r.seed, r.iteration)))
    return RunRecord(cfg.label, cfg.config_hash(), ordered)


SWEEP_AXES = ("augmentation-factor", "barycenter-group-size", "strategy")


def _cell_for(base: ExperimentConfig, axis: str, value) -> ExperimentConfig:
    if axis == "augmentation-factor":
        aug = dict(base.augmentation)
        if aug.get("mode", "none") == "none":
            aug["mode"] = "wasserstein"
        aug["factor"] = int(value)
        return replace(base, augmentation=aug,
                       label=f"{base.label}_factor{value}")
    if axis == "barycenter-group-size":
        aug = dict(base.augmentation)
        if aug.get("mode", "none") == "none":
            aug["mode"] = "wasserstein"
        aug["group_size"] = int(value)
        return replace(base, augmentation=aug,
                       label=f"{base.label}_group{value}")
    if axis == "strategy":
        return replace(base, strategy=str(value),
                       label=f"{base.label}_{value}")
    raise ConfigError(f"unknown sweep axis {axis!r}; choose from {SWEEP_AXES}")


def thread_budget() -> int:
    raw = os.environ.get("ALLWAS_THREADS", "")
    try:
        n = int(raw) if raw else 1
    except ValueError:
        raise ConfigError(f"ALLWAS_THREADS must be an integer (got {raw!r})")
    return max(1, n)


def run_sweep(base: ExperimentConfig, axis: str, values) -> list:
    """Paired grid along one axis: every cell shares the base master seed,
    so per-repeat seeds (and the data they see) line up across cells."""
    values = list(values)
    if not values:
        raise ConfigError("sweep values must be non-empty")
    cells = [_cell_for(base, axis, v) for v in values]
    corpus = load_corpus(base.corpus)
    workers = thread_budget()
    if workers == 1:
        return [run_experiment(cell, corpus) for cell in cells]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(run_experiment, cell, corpus) for cell in cells]
        return [f.result() for f in futures]
