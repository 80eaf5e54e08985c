"""Flow-record ingestion, label binarization, normalization, splitting,
batching, and a synthetic generator for desk-scale testing.

The ingestion contract is deliberately strict: every non-label CSV cell
must parse as a finite real number, and any row that fails is dropped and
counted rather than imputed.  Normalization is plain per-feature z-scoring
and must be fit on the training split only — ``fit_normalizer`` refuses a
validation split outright, and the resulting stats record which split they
came from so run artifacts stay auditable.
"""

import csv
from dataclasses import dataclass
from math import isfinite
from pathlib import Path

import numpy as np

from .errors import (
    EmptyFile,
    EmptyInput,
    FeatureCountMismatch,
    InvalidConfig,
    LeakageError,
    LengthMismatch,
    MissingColumn,
)

__all__ = [
    "FlowRecord",
    "LoadResult",
    "FlowDataset",
    "NormStats",
    "SplitSpec",
    "load_csv",
    "binarize",
    "fit_normalizer",
    "apply_normalizer",
    "split",
    "batches",
    "synth_generate",
    "DEFAULT_BENIGN_LABEL",
]

DEFAULT_BENIGN_LABEL = "BenignTraffic"

# Informative columns used by the synthetic generator.
SYNTH_FEATURES = 45
SYNTH_INFORMATIVE = 8
SYNTH_SEPARATIONS = {"separable": 6.0, "noisy": 1.0}


@dataclass(frozen=True)
class FlowRecord:
    """One parsed CSV row: finite feature vector plus the raw label string
    (None when the source had no label column)."""

    features: np.ndarray
    raw_label: str


@dataclass(frozen=True)
class LoadResult:
    records: list
    dropped_rows: int
    total_rows: int
    source: str

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)


@dataclass
class FlowDataset:
    """Feature matrix [N, F] (float32), binary labels (0 benign,
    1 malicious), and bookkeeping about where the rows came from."""

    features: np.ndarray
    labels: np.ndarray
    provenance: str = ""
    role: str = "unsplit"  # "unsplit" | "train" | "val"
    norm_stats: "NormStats" = None

    def __len__(self):
        return self.features.shape[0]

    @property
    def feature_count(self):
        return self.features.shape[1]


@dataclass(frozen=True)
class NormStats:
    """Per-feature z-score statistics plus the split they were fit on."""

    mean: np.ndarray
    std: np.ndarray
    fit_split: str

    @property
    def feature_count(self):
        return self.mean.shape[0]

    def to_json_obj(self):
        return {
            "fit_split": self.fit_split,
            "features": [
                {"feature_index": i,
                 "mean": float(self.mean[i]),
                 "std": float(self.std[i])}
                for i in range(self.feature_count)
            ],
        }

    @classmethod
    def from_json_obj(cls, obj):
        rows = sorted(obj["features"], key=lambda r: r["feature_index"])
        if [r["feature_index"] for r in rows] != list(range(len(rows))):
            raise InvalidConfig("normalization stats have gaps in feature_index")
        mean = np.array([r["mean"] for r in rows], dtype=np.float64)
        std = np.array([r["std"] for r in rows], dtype=np.float64)
        return cls(mean=mean, std=std, fit_split=str(obj.get("fit_split", "unsplit")))


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0
    stratified: bool = True

    def validate(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise InvalidConfig(
                f"train_fraction must be in (0, 1), got {self.train_fraction}")
        return self

    def to_json_obj(self):
        return {"train_fraction": self.train_fraction,
                "seed": self.seed,
                "stratified": self.stratified}


def load_csv(path, label_column="label", require_label=True):
    """Parses a header-ed CSV of flow records.

    Every column except the label is parsed as a real number; rows with a
    wrong cell count, unparseable cells, or non-finite values are dropped
    and counted in the returned LoadResult rather than imputed.  With
    ``require_label=False`` a missing label column is tolerated (all
    columns become features) so unlabeled inputs can still be scored.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyFile(f"{path} has no header row") from None
        if label_column in header:
            label_idx = header.index(label_column)
        elif require_label:
            raise MissingColumn(
                f"{path} has no column {label_column!r}; header: {header}")
        else:
            label_idx = None

        width = len(header)
        records = []
        dropped = 0
        total = 0
        for row in reader:
            total += 1
            if len(row) != width:
                dropped += 1
                continue
            raw_label = None if label_idx is None else row[label_idx]
            cells = row if label_idx is None else (
                row[:label_idx] + row[label_idx + 1:])
            try:
                values = [float(c) for c in cells]
            except ValueError:
                dropped += 1
                continue
            if not all(isfinite(v) for v in values):
                dropped += 1
                continue
            records.append(FlowRecord(
                features=np.array(values, dtype=np.float64),
                raw_label=raw_label))
    return LoadResult(records=records, dropped_rows=dropped,
                      total_rows=total, source=str(path))


def binarize(records, benign_label=DEFAULT_BENIGN_LABEL, mode="exact"):
    """Collapses raw labels to binary: benign -> 0, anything else -> 1.

    ``mode="prefix"`` treats any raw label starting with ``benign_label``
    as benign, for CSV releases that suffix their benign class.
    """
    if mode not in ("exact", "prefix"):
        raise InvalidConfig(f"mode must be 'exact' or 'prefix', got {mode!r}")
    records = list(records)
    if not records:
        raise EmptyInput("no records to binarize")
    width = records[0].features.shape[0]
    for r in records:
        if r.features.shape[0] != width:
            raise LengthMismatch(
                f"inconsistent feature counts: {r.features.shape[0]} vs {width}")
    features = np.stack([r.features for r in records]).astype(np.float32)
    if mode == "exact":
        labels = np.array(
            [0 if r.raw_label == benign_label else 1 for r in records],
            dtype=np.int64)
    else:
        labels = np.array(
            [0 if (r.raw_label or "").startswith(benign_label) else 1
             for r in records],
            dtype=np.int64)
    return FlowDataset(features=features, labels=labels)


def _features_of(ds_or_features):
    if isinstance(ds_or_features, FlowDataset):
        return ds_or_features.features, ds_or_features.role
    return np.asarray(ds_or_features), "unsplit"


def fit_normalizer(train):
    """Per-feature mean/std (population) from the training rows.

    Refuses a validation split: statistics computed there would leak
    held-out information into preprocessing.  Features with std below
    1e-12 get std forced to 1 so constant columns pass through centered.
    """
    features, role = _features_of(train)
    if role == "val":
        raise LeakageError(
            "normalization statistics must be fit on the training split, "
            "not on held-out validation rows")
    if features.shape[0] == 0:
        raise EmptyInput("cannot fit a normalizer on zero rows")
    x = features.astype(np.float64)
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)
    return NormStats(mean=mean, std=std, fit_split=role)


def apply_normalizer(data, stats):
    """Z-scores features with previously fit stats.  Accepts a raw matrix
    (returns a matrix) or a FlowDataset (returns a new FlowDataset with
    ``norm_stats`` attached)."""
    if isinstance(data, FlowDataset):
        normalized = apply_normalizer(data.features, stats)
        return FlowDataset(features=normalized, labels=data.labels,
                           provenance=data.provenance, role=data.role,
                           norm_stats=stats)
    x = np.asarray(data)
    if x.ndim != 2 or x.shape[1] != stats.feature_count:
        raise FeatureCountMismatch(
            f"data has {x.shape[1] if x.ndim == 2 else '?'} features, "
            f"normalizer was fit on {stats.feature_count}")
    return ((x.astype(np.float64) - stats.mean) / stats.std).astype(np.float32)


def _clamped_take(n, fraction):
    take = int(round(n * fraction))
    return min(max(take, 1), n - 1) if n >= 2 else take


def split(ds, spec=None):
    """Disjoint (train, val) covering every row; deterministic in seed.

    Stratified mode (the default) splits each class separately so the
    class ratio survives within one row per class — with ~3.5% benign
    traffic an unstratified small split can easily lose benign rows from
    validation entirely.
    """
    spec = (spec or SplitSpec()).validate()
    n = len(ds)
    if n < 2:
        raise EmptyInput(f"need at least 2 rows to split, got {n}")
    rng = np.random.default_rng(spec.seed)

    if spec.stratified:
        train_idx = []
        val_idx = []
        for cls in np.unique(ds.labels):
            cls_idx = np.flatnonzero(ds.labels == cls)
            cls_idx = cls_idx[rng.permutation(cls_idx.size)]
            take = int(round(cls_idx.size * spec.train_fraction))
            take = min(max(take, 0), cls_idx.size)
            train_idx.append(cls_idx[:take])
            val_idx.append(cls_idx[take:])
        train_idx = np.concatenate(train_idx)
        val_idx = np.concatenate(val_idx)
        # A tiny class can round everything into one side; rebalance so
        # neither side is empty.
        if train_idx.size == 0:
            train_idx, val_idx = val_idx[:1], val_idx[1:]
        elif val_idx.size == 0:
            train_idx, val_idx = train_idx[:-1], train_idx[-1:]
    else:
        order = rng.permutation(n)
        take = _clamped_take(n, spec.train_fraction)
        train_idx, val_idx = order[:take], order[take:]

    def subset(idx, role):
        return FlowDataset(features=ds.features[idx], labels=ds.labels[idx],
                           provenance=ds.provenance, role=role)

    return subset(train_idx, "train"), subset(val_idx, "val")


def batches(ds, batch_size, shuffle_seed=None):
    """Yields (features, one-hot labels) covering every row exactly once.

    The last batch may be short.  Order is the row order when
    ``shuffle_seed`` is None, otherwise a pure function of the seed.
    """
    if batch_size < 1:
        raise InvalidConfig(f"batch_size must be >= 1, got {batch_size}")
    n = len(ds)
    if n == 0:
        raise EmptyInput("cannot batch an empty dataset")
    if shuffle_seed is None:
        order = np.arange(n)
    else:
        order = np.random.default_rng(shuffle_seed).permutation(n)
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        x = ds.features[idx]
        y = np.zeros((idx.size, 2), dtype=np.float32)
        y[np.arange(idx.size), ds.labels[idx]] = 1.0
        yield x, y


def synth_generate(n, seed=0, difficulty="separable"):
    """Balanced 45-feature Gaussian two-cluster dataset.

    The first 8 features are informative: class means sit ``sep`` standard
    deviations apart there (6 for "separable", 1 for "noisy"); the rest is
    unit noise.  Rows are shuffled so class blocks do not align with batch
    boundaries.  Deterministic in (n, seed, difficulty).
    """
    if n < 2:
        raise InvalidConfig(f"need n >= 2 synthetic rows, got {n}")
    if difficulty not in SYNTH_SEPARATIONS:
        raise InvalidConfig(
            f"difficulty must be one of {sorted(SYNTH_SEPARATIONS)}, "
            f"got {difficulty!r}")
    sep = SYNTH_SEPARATIONS[difficulty]
    rng = np.random.default_rng(seed)
    n_malicious = n // 2
    labels = np.zeros(n, dtype=np.int64)
    labels[:n_malicious] = 1
    x = rng.standard_normal((n, SYNTH_FEATURES))
    x[labels == 1, :SYNTH_INFORMATIVE] += sep / 2.0
    x[labels == 0, :SYNTH_INFORMATIVE] -= sep / 2.0
    order = rng.permutation(n)
    return FlowDataset(
        features=x[order].astype(np.float32),
        labels=labels[order],
        provenance=f"synth(n={n}, seed={seed}, difficulty={difficulty})")
