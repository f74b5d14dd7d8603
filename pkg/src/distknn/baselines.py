"""Comparison classifiers: fixed-depth distributed NN, distributed 1-NN, and
the adaptive search without its early-stopping cap.

All of them share the aggregation rule of the main classifier and differ only
in how the per-shard depths k_j are chosen.
"""

from __future__ import annotations

import math
from enum import Enum

import numpy as np

from .adaptive import AdaptiveSelection, StoppingConfig, select_with_cap, _checked_sizes
from .estimator import aggregate, classify, local_estimate
from .neighbors import NeighborProfile, ProfileBatch

__all__ = [
    "ClassifierKind",
    "BASELINE_KINDS",
    "qiao_k",
    "dnn_qiao_classify",
    "d1nn_classify",
    "dann_nes_select",
]


class ClassifierKind(Enum):
    """The four classifiers exercised by the benchmark harness."""

    DANN = "dann"
    DANN_NES = "dann_nes"
    DNN_QIAO = "dnn_qiao"
    D1NN = "d1nn"

    @classmethod
    def parse(cls, name: str) -> "ClassifierKind":
        key = name.strip().lower()
        for kind in cls:
            if kind.value == key:
                return kind
        raise ValueError(f"unknown classifier {name!r}; expected one of "
                         f"{[k.value for k in cls]}")


#: The non-adaptive / uncapped comparison classifiers.
BASELINE_KINDS = (ClassifierKind.DNN_QIAO, ClassifierKind.D1NN, ClassifierKind.DANN_NES)


def qiao_k(nj: int, cfg: StoppingConfig) -> int:
    """Fixed depth ceil(nj * N^(-d/(2+d))), clamped to [1, nj]."""
    if not 1 <= nj <= cfg.N:
        raise ValueError(f"nj={nj} outside [1, N={cfg.N}]")
    k = math.ceil(nj * cfg.N ** (-cfg.d / (2 + cfg.d)))
    return min(max(1, k), nj)


def _as_batch(profiles: list[NeighborProfile] | ProfileBatch) -> ProfileBatch:
    if isinstance(profiles, ProfileBatch):
        return profiles
    return ProfileBatch.from_profiles(list(profiles))


def dnn_qiao_classify(
    profiles: list[NeighborProfile] | ProfileBatch,
    shard_sizes: np.ndarray,
    cfg: StoppingConfig,
) -> int:
    """Aggregate local estimates at the fixed per-shard depths and classify."""
    batch = _as_batch(profiles)
    sizes = _checked_sizes(batch, shard_sizes, cfg)
    estimates = []
    for j in range(len(batch)):
        k = qiao_k(int(sizes[j]), cfg)
        if batch.k_max[j] < k:
            raise ValueError(f"profile {j} too shallow for depth {k}")
        estimates.append(local_estimate(batch.profile(j), k))
    return classify(aggregate(estimates).eta)


def d1nn_classify(profiles: list[NeighborProfile] | ProfileBatch) -> int:
    """Majority over each shard's single nearest label (ties go to 1)."""
    batch = _as_batch(profiles)
    estimates = [local_estimate(batch.profile(j), 1) for j in range(len(batch))]
    return classify(aggregate(estimates).eta)


def dann_nes_select(
    profiles: list[NeighborProfile] | ProfileBatch,
    shard_sizes: np.ndarray,
    cfg: StoppingConfig,
) -> AdaptiveSelection:
    """Adaptive search with the cap replaced by n_1 (no early stopping).

    Requires full-depth profiles (k_max_j = n_j). The crossing threshold is
    unchanged; only the search range grows.
    """
    batch = _as_batch(profiles)
    sizes = _checked_sizes(batch, shard_sizes, cfg)
    return select_with_cap(batch, sizes, cfg, int(sizes[0]))
