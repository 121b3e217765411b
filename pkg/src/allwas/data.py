"""Corpus ingestion, featurization, synthetic data, and labeling seeds.

JSONL is the single corpus format. One JSON object per line with fields:

    id         int or string, unique across the file
    text       optional string
    embedding  optional; list of floats (one token) or list of rows
    label      class name (string) or class index (int)

Lines need text or embedding; when both are present the embedding wins and
a warning is logged. Malformed lines are collected into one error report
and the whole ingest aborts if any line is bad.

Text featurization is deterministic across runs and machines: tokens are
lowercased alphanumeric runs, and each distinct token maps to a Gaussian
vector drawn from a generator seeded with fnv1a64(token) XOR seed.
"""

from __future__ import annotations

import json
import re
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .model import ExampleEmbedding, SoftLabel
from .seeding import fnv1a64, rng_for

_TOKEN_RE = re.compile(r"[a-z0-9]+")
_MASK64 = 0xFFFFFFFFFFFFFFFF


@dataclass(frozen=True)
class FeaturizerConfig:
    d: int = 64
    seed: int = 0


@dataclass(frozen=True)
class CorpusExample:
    example_id: object
    text: str | None
    embedding: ExampleEmbedding
    label: SoftLabel


@dataclass(frozen=True)
class Corpus:
    examples: tuple
    class_names: tuple
    target_class: int
    split_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "examples", tuple(self.examples))
        object.__setattr__(self, "class_names", tuple(self.class_names))
        ids = [ex.example_id for ex in self.examples]
        if len(set(ids)) != len(ids):
            raise DataError("corpus ids are not unique")
        dims = {ex.embedding.dim for ex in self.examples}
        if len(dims) > 1:
            raise DataError(f"mixed embedding dimensions in corpus: {sorted(dims)}")
        if not (0 <= self.target_class < len(self.class_names)):
            raise ConfigError(f"target_class {self.target_class} out of range")
        object.__setattr__(self, "_by_id", {ex.example_id: ex for ex in self.examples})

    @property
    def n(self) -> int:
        return len(self.examples)

    @property
    def dim(self) -> int:
        return self.examples[0].embedding.dim

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def ids(self):
        return [ex.example_id for ex in self.examples]

    def __getitem__(self, example_id) -> CorpusExample:
        try:
            return self._by_id[example_id]
        except KeyError:
            raise DataError(f"unknown example id {example_id!r}") from None

    def class_priors(self) -> np.ndarray:
        counts = np.zeros(self.n_classes)
        for ex in self.examples:
            counts[ex.label.hard] += 1
        return counts / counts.sum()

    def pooled_matrix(self) -> np.ndarray:
        return np.stack([ex.embedding.pooled for ex in self.examples])


def featurize_text(text: str, d: int = 64, seed: int = 0) -> ExampleEmbedding:
    """Deterministic pseudo-embedding: one fixed Gaussian vector per
    distinct lowercase token. Empty text maps to a single zero token."""
    tokens = _TOKEN_RE.findall(text.lower())
    if not tokens:
        warnings.warn("empty text; using a single zero-vector token")
        return ExampleEmbedding(np.zeros((1, d)))
    cache = {}
    rows = []
    for tok in tokens:
        if tok not in cache:
            gen = np.random.default_rng((fnv1a64(tok) ^ seed) & _MASK64)
            cache[tok] = gen.standard_normal(d)
        rows.append(cache[tok])
    return ExampleEmbedding(np.stack(rows))


def _parse_embedding(value, line_no: int):
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"line {line_no}: embedding must be a vector or a matrix")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"line {line_no}: embedding has non-finite entries")
    return arr


def ingest_jsonl(
    path,
    featurizer: FeaturizerConfig | None = None,
    class_names=None,
    target_class=None,
) -> Corpus:
    """Read a JSONL corpus, featurizing text rows when no embedding is given.

    ``class_names`` fixes the label set (unknown labels become errors);
    otherwise names are inferred from the observed labels. ``target_class``
    may be an index or a class name; the default is the rarest class
    (lowest index on ties).
    """
    rows = []
    errors = []
    seen_ids = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                if "id" not in obj or "label" not in obj:
                    raise ValueError(f"line {line_no}: missing id or label")
                ex_id = obj["id"]
                if ex_id in seen_ids:
                    raise ValueError(f"line {line_no}: duplicate id {ex_id!r}")
                seen_ids.add(ex_id)
                text = obj.get("text")
                emb_raw = obj.get("embedding")
                if emb_raw is None and text is None:
                    raise ValueError(f"line {line_no}: needs text or embedding")
                if emb_raw is not None:
                    if text is not None:
                        warnings.warn(
                            f"line {line_no}: both text and embedding given; "
                            "embedding wins")
                    tokens = _parse_embedding(emb_raw, line_no)
                elif featurizer is None:
                    raise ValueError(
                        f"line {line_no}: text-only row but no featurizer configured")
                else:
                    tokens = None
                rows.append((ex_id, text, emb_raw, tokens, obj["label"], line_no))
            except (ValueError, TypeError, json.JSONDecodeError) as exc:
                errors.append(str(exc) if str(exc).startswith("line")
                              else f"line {line_no}: {exc}")
    if errors:
        raise DataError("bad corpus lines:\n  " + "\n  ".join(errors))
    if not rows:
        raise DataError("no examples in corpus file")

    labels = [r[4] for r in rows]
    if class_names is None:
        if all(isinstance(l, int) for l in labels):
            class_names = [str(i) for i in range(max(labels) + 1)]
        else:
            class_names = sorted({str(l) for l in labels})
    class_names = list(class_names)
    name_to_idx = {name: i for i, name in enumerate(class_names)}

    examples = []
    dims = set()
    for ex_id, text, emb_raw, tokens, label, line_no in rows:
        if isinstance(label, int) and not isinstance(label, bool):
            if not (0 <= label < len(class_names)):
                errors.append(f"line {line_no}: label index {label} out of range")
                continue
            idx = label
        else:
            key = str(label)
            if key not in name_to_idx:
                errors.append(f"line {line_no}: unknown label {label!r}")
                continue
            idx = name_to_idx[key]
        if tokens is None:
            emb = featurize_text(text, featurizer.d, featurizer.seed)
        else:
            emb = ExampleEmbedding(tokens)
        dims.add(emb.dim)
        examples.append(CorpusExample(ex_id, text, emb,
                                      SoftLabel.one_hot(idx, len(class_names))))
    if errors:
        raise DataError("bad corpus lines:\n  " + "\n  ".join(errors))
    if len(dims) > 1:
        raise DataError(f"mixed embedding dimensions: {sorted(dims)}")

    if target_class is None:
        counts = np.zeros(len(class_names))
        for ex in examples:
            counts[ex.label.hard] += 1
        target_idx = int(np.argmin(counts))
    elif isinstance(target_class, str):
        target_idx = name_to_idx[target_class]
    else:
        target_idx = int(target_class)
    return Corpus(tuple(examples), tuple(class_names), target_idx)


def export_jsonl(corpus: Corpus, path) -> None:
    """Write the corpus in the ingest schema; a round trip is an identity
    (embeddings are materialized)."""
    with open(path, "w", encoding="utf-8") as fh:
        for ex in corpus.examples:
            obj = {
                "id": ex.example_id,
                "embedding": [[float(v) for v in row] for row in ex.embedding.tokens],
                "label": corpus.class_names[ex.label.hard],
            }
            if ex.text is not None:
                obj["text"] = ex.text
            fh.write(json.dumps(obj) + "\n")


@dataclass(frozen=True)
class SynthSpec:
    """Gaussian cluster-mixture corpus: per-class cluster centers with
    configurable priors and token noise."""

    n: int = 2000
    d: int = 32
    priors: tuple = (0.9, 0.1)
    clusters_per_class: int = 2
    noise: float = 1.0
    separation: float = 4.0
    seed: int = 0
    token_count_range: tuple = (3, 12)

    def __post_init__(self):
        priors = tuple(float(p) for p in self.priors)
        if abs(sum(priors) - 1.0) > 1e-9 or any(p <= 0 for p in priors):
            raise ConfigError("priors must be positive and sum to 1")
        object.__setattr__(self, "priors", priors)
        if self.n < 1 or self.d < 1 or self.clusters_per_class < 1:
            raise ConfigError("n, d and clusters_per_class must be positive")


def make_synthetic(spec: SynthSpec) -> Corpus:
    """Desk-scale corpus surrogate; ``noise=0`` makes classes separable by
    their nearest cluster centroid. Target class is the lowest prior."""
    rng = np.random.default_rng(spec.seed)
    n_classes = len(spec.priors)
    sigma = spec.separation / np.sqrt(2 * spec.d)
    centers = rng.standard_normal((n_classes, spec.clusters_per_class, spec.d)) * sigma

    classes = rng.choice(n_classes, size=spec.n, p=np.asarray(spec.priors))
    clusters = rng.integers(0, spec.clusters_per_class, size=spec.n)
    lo, hi = spec.token_count_range
    counts = rng.integers(lo, hi + 1, size=spec.n)

    examples = []
    for i in range(spec.n):
        center = centers[classes[i], clusters[i]]
        tokens = center + spec.noise * rng.standard_normal((counts[i], spec.d))
        examples.append(CorpusExample(
            i, None, ExampleEmbedding(tokens),
            SoftLabel.one_hot(int(classes[i]), n_classes)))
    names = tuple(f"class{c}" for c in range(n_classes))
    target = int(np.argmin(spec.priors))
    return Corpus(tuple(examples), names, target, split_seed=spec.seed)


@dataclass(frozen=True)
class SeedSpec:
    """Initial labeled-set construction regime."""

    setting: str = "balanced"   # balanced | imbalanced | imbalanced-practical
    seed_size: int = 25
    seed: int = 0
    minority_fraction: float = 0.5
    radius_percentile: float = 10.0

    def __post_init__(self):
        if self.setting not in ("balanced", "imbalanced", "imbalanced-practical"):
            raise ConfigError(f"unknown seed setting {self.setting!r}")
        if self.seed_size < 1:
            raise ConfigError("seed_size must be >= 1")


def _pairwise_distance_percentile(pooled: np.ndarray, percentile: float,
                                  rng: np.random.Generator) -> float:
    n = pooled.shape[0]
    if n > 1000:
        pick = rng.choice(n, size=1000, replace=False)
        pooled = pooled[pick]
        n = 1000
    diffs = pooled[:, None, :] - pooled[None, :, :]
    dist = np.sqrt((diffs ** 2).sum(-1))
    upper = dist[np.triu_indices(n, k=1)]
    return float(np.percentile(upper, percentile))


def build_seed(corpus: Corpus, spec: SeedSpec):
    """Initial (labeled ids, unlabeled ids) partition of the corpus.

    balanced: uniform random seed. imbalanced: a minority_fraction share
    drawn from the true target class (a stand-in for a high-precision
    oracle), rest uniform from the remainder. imbalanced-practical:
    minority seeds come only from the neighbor ball around one random
    minority point (radius = the given percentile of pairwise pooled
    distances), simulating a biased keyword search; rest uniform.
    """
    if spec.seed_size > corpus.n:
        raise DataError(f"seed size {spec.seed_size} exceeds corpus ({corpus.n})")
    stratified = spec.setting != "balanced"
    if stratified and spec.seed_size < corpus.n_classes:
        raise ConfigError("seed size must cover at least one per class")
    rng = rng_for(spec.seed, "build-seed", spec.setting)
    ids = corpus.ids

    if spec.setting == "balanced":
        picked = rng.choice(corpus.n, size=spec.seed_size, replace=False)
        labeled = [ids[i] for i in picked]
    else:
        minority = [i for i, ex in enumerate(corpus.examples)
                    if ex.label.hard == corpus.target_class]
        if not minority:
            raise DataError("corpus has no examples of the target class")
        n_min = min(int(round(spec.seed_size * spec.minority_fraction)), len(minority))
        n_min = max(n_min, 1)
        if spec.setting == "imbalanced":
            chosen_min = rng.choice(len(minority), size=n_min, replace=False)
            min_ids = [minority[i] for i in chosen_min]
        else:
            pooled = corpus.pooled_matrix()
            radius = _pairwise_distance_percentile(pooled, spec.radius_percentile, rng)
            anchor = minority[int(rng.integers(len(minority)))]
            min_arr = np.array(minority)
            dist = np.linalg.norm(pooled[min_arr] - pooled[anchor], axis=1)
            ball = min_arr[dist <= radius]
            if len(ball) < n_min:
                ball = min_arr[np.argsort(dist, kind="stable")[:n_min]]
            chosen = rng.choice(len(ball), size=n_min, replace=False)
            min_ids = [int(i) for i in ball[chosen]]
        rest_pool = [i for i in range(corpus.n) if i not in set(min_ids)]
        n_rest = spec.seed_size - len(min_ids)
        chosen_rest = rng.choice(len(rest_pool), size=n_rest, replace=False)
        labeled = [ids[i] for i in min_ids] + [ids[rest_pool[i]] for i in chosen_rest]

    labeled_set = set(labeled)
    unlabeled = [i for i in ids if i not in labeled_set]
    return labeled, unlabeled


def train_val_split(corpus: Corpus, val_fraction: float = 0.2, seed: int = 0):
    """Seeded shuffle split into (pool corpus, validation corpus)."""
    if not (0.0 < val_fraction < 1.0):
        raise ConfigError("val_fraction must be in (0, 1)")
    rng = rng_for(seed, "train-val-split")
    order = rng.permutation(corpus.n)
    n_val = max(1, int(round(corpus.n * val_fraction)))
    val_idx = set(order[:n_val].tolist())
    pool = [ex for i, ex in enumerate(corpus.examples) if i not in val_idx]
    val = [ex for i, ex in enumerate(corpus.examples) if i in val_idx]
    make = lambda rows: Corpus(tuple(rows), corpus.class_names, corpus.target_class,
                               split_seed=seed)
    return make(pool), make(val)
