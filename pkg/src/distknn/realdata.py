"""Census-income (UCI adult) ingestion and the real-data evaluation pipeline.

The raw file is comma-separated with no header; the six numeric columns age,
fnlwgt, education-num, capital-gain, capital-loss and hours-per-week form the
feature vector and the income column maps to 1 for ">50K". A row is dropped
when any of those used columns carries the "?" missing marker; malformed rows
are skipped and counted. Features are min-max scaled to [0, 1] with the
training set's ranges, and test values are clamped into [0, 1].
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np

from .adaptive import StoppingConfig
from .engine import evaluate_queries
from .neighbors import Shard
from .simharness import (
    ExperimentConfig,
    ExperimentResult,
    ResultRow,
    partition_proportional,
    partition_uniform,
    shard_count,
)

__all__ = [
    "AdultRecord",
    "DatasetSplit",
    "FeatureScaling",
    "ingest_adult",
    "records_to_arrays",
    "fit_scaling",
    "apply_scaling",
    "scale_features",
    "train_test_split",
    "evaluate_real",
]

logger = logging.getLogger(__name__)

# Column positions in the raw adult schema (15 fields per row).
_ADULT_FIELD_COUNT = 15
_FEATURE_COLUMNS = {
    "age": 0,
    "fnlwgt": 2,
    "education_num": 4,
    "capital_gain": 10,
    "capital_loss": 11,
    "hours_per_week": 12,
}
_INCOME_COLUMN = 14
_MISSING = "?"


@dataclass(frozen=True)
class AdultRecord:
    """Six numeric census features plus the binary income label."""

    age: float
    fnlwgt: float
    education_num: float
    capital_gain: float
    capital_loss: float
    hours_per_week: float
    income_label: int

    def features(self) -> tuple[float, ...]:
        return (
            self.age,
            self.fnlwgt,
            self.education_num,
            self.capital_gain,
            self.capital_loss,
            self.hours_per_week,
        )


def _parse_adult(path) -> tuple[list[AdultRecord], int]:
    """Parse the raw file; returns (records, skipped_row_count)."""
    records: list[AdultRecord] = []
    skipped = 0
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            fields = [f.strip() for f in line.split(",")]
            if len(fields) != _ADULT_FIELD_COUNT:
                skipped += 1
                continue
            used = [fields[c] for c in _FEATURE_COLUMNS.values()] + [fields[_INCOME_COLUMN]]
            if _MISSING in used:
                skipped += 1
                continue
            income = fields[_INCOME_COLUMN].rstrip(".")
            if income == ">50K":
                label = 1
            elif income == "<=50K":
                label = 0
            else:
                skipped += 1
                continue
            try:
                values = [float(fields[c]) for c in _FEATURE_COLUMNS.values()]
            except ValueError:
                skipped += 1
                continue
            if not all(np.isfinite(values)):
                skipped += 1
                continue
            records.append(AdultRecord(*values, income_label=label))
    return records, skipped


def ingest_adult(path) -> list[AdultRecord]:
    """Load the raw census file, dropping missing/malformed rows.

    The missing-value rule applies to the used columns only: the "?" marker
    appears in categorical columns this pipeline never reads, and those rows
    stay in.
    """
    records, skipped = _parse_adult(path)
    if skipped:
        logger.info("ingest: kept %d records, skipped %d rows", len(records), skipped)
    return records


def records_to_arrays(records: list[AdultRecord]) -> tuple[np.ndarray, np.ndarray]:
    if not records:
        raise ValueError("no records")
    feats = np.array([r.features() for r in records], dtype=np.float64)
    labels = np.array([r.income_label for r in records], dtype=np.int64)
    return feats, labels


@dataclass(frozen=True)
class FeatureScaling:
    """Per-column min-max parameters fitted on the training set."""

    mins: np.ndarray
    maxs: np.ndarray


def fit_scaling(features: np.ndarray) -> FeatureScaling:
    if features.size == 0:
        raise ValueError("cannot fit scaling on empty data")
    return FeatureScaling(mins=features.min(axis=0), maxs=features.max(axis=0))


def apply_scaling(features: np.ndarray, scaling: FeatureScaling) -> np.ndarray:
    """Map each column through the fitted range and clamp into [0, 1].

    Constant training columns map to 0.
    """
    span = scaling.maxs - scaling.mins
    safe = np.where(span > 0, span, 1.0)
    scaled = (features - scaling.mins) / safe
    scaled[:, span == 0] = 0.0
    return np.clip(scaled, 0.0, 1.0)


def scale_features(records: list[AdultRecord]) -> tuple[Shard, FeatureScaling]:
    """Min-max scale the records into [0, 1]^6 and return fitted parameters."""
    feats, labels = records_to_arrays(records)
    scaling = fit_scaling(feats)
    return Shard(1, apply_scaling(feats, scaling), labels), scaling


@dataclass(frozen=True)
class DatasetSplit:
    train: Shard
    test: Shard


def train_test_split(shard: Shard, test_fraction: float, rng: np.random.Generator) -> DatasetSplit:
    """Random permutation split; the training side gets ceil(N*(1-f)) rows."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction={test_fraction} outside (0, 1)")
    n = shard.size
    n_train = int(np.ceil(n * (1.0 - test_fraction)))
    if n_train == n:
        raise ValueError("test split is empty; lower the test fraction")
    perm = rng.permutation(n)
    train_idx, test_idx = perm[:n_train], perm[n_train:]
    return DatasetSplit(
        train=Shard(1, shard.features[train_idx], shard.labels[train_idx]),
        test=Shard(2, shard.features[test_idx], shard.labels[test_idx]),
    )


def evaluate_real(
    train: Shard,
    test: Shard,
    cfg: ExperimentConfig,
    workers: int = 1,
) -> ExperimentResult:
    """Score every enabled classifier on the test set across the epsilon grid.

    For each epsilon the training set is partitioned once (m = ceil(N^eps),
    split mode from the config) and every test point is classified. Rows
    report agreement with the true test labels, so the misclassification rate
    is 1 - agreement_rate. The ``kappa`` and ``runs`` fields of the config are
    not used here.
    """
    if train.dim != test.dim:
        raise ValueError("train and test dimensions differ")
    n_train = train.size
    stopping = StoppingConfig(N=n_train, d=train.dim, include_log_in_bound=cfg.include_log_in_bound)
    rows: list[ResultRow] = []
    agreement_samples = {}
    k1_samples = {}
    for eps_idx, eps in enumerate(cfg.epsilons):
        m = shard_count(n_train, eps)
        rng = np.random.default_rng(np.random.SeedSequence(entropy=cfg.seed, spawn_key=(eps_idx,)))
        if cfg.split == "uniform":
            part = partition_uniform(train, m, rng)
        else:
            part = partition_proportional(train, m, rng)
        for kind in cfg.classifiers:
            start = time.perf_counter()
            labels, k1s, _ = evaluate_queries(part, test.features, kind, stopping, workers=workers)
            elapsed = time.perf_counter() - start
            agree = (labels == test.labels).astype(np.int8)
            rate = float(agree.mean())
            ks = k1s[k1s >= 0]
            rows.append(
                ResultRow(
                    classifier=kind.value,
                    epsilon=eps,
                    m=m,
                    agreement_rate=rate,
                    mc_stderr=float(np.sqrt(rate * (1.0 - rate) / agree.size)),
                    mean_runtime_s=elapsed,
                    k1_min=int(ks.min()) if ks.size else None,
                    k1_med=float(np.median(ks)) if ks.size else None,
                    k1_max=int(ks.max()) if ks.size else None,
                )
            )
            agreement_samples[(kind.value, eps)] = agree
            if ks.size:
                k1_samples[(kind.value, eps)] = ks
    return ExperimentResult(config=cfg, rows=rows, agreement_samples=agreement_samples, k1_samples=k1_samples)
