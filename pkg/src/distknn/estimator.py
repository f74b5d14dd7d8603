"""Per-shard nearest-neighbor regression estimates and their aggregation.

A local estimate is the fraction of 1-labels among a shard's k nearest
neighbors. The cross-shard estimate is the k_j-weighted mean of the local
estimates, which equals the pooled fraction of 1-labels over all selected
neighbors. Aggregation is done in integer counts with a single division at
the end, so the pooled-count identity holds exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .neighbors import NeighborProfile

__all__ = ["LocalEstimate", "AggregateEstimate", "local_estimate", "aggregate", "classify"]


@dataclass(frozen=True)
class LocalEstimate:
    """One shard's k-NN estimate of P(Y=1 | x).

    ``count`` is the integer number of 1-labels among the k neighbors;
    ``eta`` is ``count / k``. When constructed without an explicit count it
    is recovered from ``eta * k``, which must be an integer.
    """

    shard_id: int
    k: int
    eta: float
    count: int | None = None

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta={self.eta} outside [0, 1]")
        count = self.count
        if count is None:
            count = round(self.eta * self.k)
        if abs(self.eta * self.k - count) > 1e-9 or not 0 <= count <= self.k:
            raise ValueError("eta * k must be an integer label count")
        object.__setattr__(self, "count", int(count))


@dataclass(frozen=True, eq=False)
class AggregateEstimate:
    """Weighted cross-shard estimate: pooled 1-label count over pooled k."""

    ks: np.ndarray
    eta: float
    total_k: int
    total_count: int

    def __post_init__(self) -> None:
        ks = np.asarray(self.ks, dtype=np.int64)
        ks.setflags(write=False)
        object.__setattr__(self, "ks", ks)


def local_estimate(profile: NeighborProfile, k: int) -> LocalEstimate:
    """k-NN estimate from a profile: prefix_sums[k] / k.

    Raises ValueError if k is outside [1, profile.k_max].
    """
    count = profile.label_count(k)
    return LocalEstimate(shard_id=profile.shard_id, k=k, eta=count / k, count=count)


def aggregate(estimates: list[LocalEstimate]) -> AggregateEstimate:
    """k_j-weighted mean of local estimates via exact pooled counts.

    Equivalent to the fraction of 1-labels among all sum(k_j) selected
    neighbors; computed as one integer division so no floating-point
    accumulation error enters the stopping statistic.
    """
    if not estimates:
        raise ValueError("need at least one local estimate")
    ks = np.array([e.k for e in estimates], dtype=np.int64)
    total_k = int(ks.sum())
    total_count = int(sum(e.count for e in estimates))
    return AggregateEstimate(ks=ks, eta=total_count / total_k, total_k=total_k, total_count=total_count)


def classify(eta: float) -> int:
    """Plug-in decision: 1 iff eta >= 1/2 (the boundary maps to 1)."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta={eta} outside [0, 1]")
    return 1 if eta >= 0.5 else 0
