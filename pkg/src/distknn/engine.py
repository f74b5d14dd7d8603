"""Evaluation engine: partitions, bulk profile building, classifier dispatch.

A Partition keeps all shards of one split in two flat arrays, shards laid out
contiguously in nonincreasing size order. Because equal-sized shards sit next
to each other, neighbor search vectorizes across whole groups of shards (and
across query batches) instead of looping shard by shard.

The grouped path reproduces the per-shard reference functions bit for bit:
distance accumulation is column-ordered, which matches numpy's row reduction
for the dimensions used here (d < 8), and selection uses the same
(distance, index) ordering.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .adaptive import StoppingConfig, depth_matrix, k1_bound, scan_first_crossing, stopping_threshold
from .baselines import ClassifierKind
from .neighbors import ProfileBatch, Shard, k_smallest_rows

__all__ = ["Partition", "profile_partition", "required_depths", "evaluate_query", "evaluate_queries"]


@dataclass
class Partition:
    """Shards of one dataset stored contiguously, largest shard first."""

    features: np.ndarray  # (N, d) permuted so shard j occupies offsets[j]:offsets[j+1]
    labels: np.ndarray  # (N,)
    sizes: np.ndarray  # (m,) nonincreasing
    offsets: np.ndarray  # (m + 1,)

    @classmethod
    def from_shard(cls, data: Shard, sizes: np.ndarray, rng: np.random.Generator) -> "Partition":
        sizes = np.asarray(sizes, dtype=np.int64)
        if int(sizes.sum()) != data.size:
            raise ValueError("shard sizes must sum to the data size")
        if np.any(np.diff(sizes) > 0):
            raise ValueError("shard sizes must be nonincreasing")
        perm = rng.permutation(data.size)
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        return cls(
            features=data.features[perm],
            labels=data.labels[perm],
            sizes=sizes,
            offsets=offsets,
        )

    def __len__(self) -> int:
        return self.sizes.shape[0]

    @property
    def total(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def shard(self, j: int) -> Shard:
        a, b = int(self.offsets[j]), int(self.offsets[j + 1])
        return Shard(j + 1, self.features[a:b], self.labels[a:b])

    def shards(self) -> list[Shard]:
        return [self.shard(j) for j in range(len(self))]

    def __iter__(self):
        return iter(self.shards())

    def size_runs(self):
        """Yield (first_shard, last_shard_exclusive, size) for equal-size runs."""
        sizes = self.sizes
        start = 0
        for j in range(1, len(sizes) + 1):
            if j == len(sizes) or sizes[j] != sizes[start]:
                yield start, j, int(sizes[start])
                start = j


def query_distance_matrix(features: np.ndarray, queries: np.ndarray) -> np.ndarray:
    """Distances from each query (rows) to each point (columns)."""
    nq = queries.shape[0]
    acc = np.zeros((nq, features.shape[0]), dtype=np.float64)
    for c in range(features.shape[1]):
        diff = queries[:, c, None] - features[:, c]
        acc += diff * diff
    return np.sqrt(acc)


def build_prefix_tensor(
    partition: Partition, queries: np.ndarray, depths: np.ndarray
) -> np.ndarray:
    """Label prefix sums for every (query, shard) pair, shape (q, m, kpad).

    ``depths[j]`` is how deep shard j's profile must go; it must be constant
    within each equal-size run (it always is when derived from shard size).
    Entries past a shard's depth are zero padding.
    """
    nq = queries.shape[0]
    m = len(partition)
    kpad = int(depths.max())
    dist = query_distance_matrix(partition.features, queries)
    out = np.zeros((nq, m, kpad), dtype=np.int64)
    for first, last, size in partition.size_runs():
        depth = int(depths[first])
        cnt = last - first
        a = int(partition.offsets[first])
        b = int(partition.offsets[last])
        block = dist[:, a:b].reshape(nq * cnt, size)
        idx = k_smallest_rows(block, depth).reshape(nq, cnt, depth)
        labs = partition.labels[a:b].reshape(cnt, size)
        picked = labs[np.arange(cnt)[None, :, None], idx]
        out[:, first:last, :depth] = np.cumsum(picked, axis=2)
    return out


def profile_partition(partition: Partition, query: np.ndarray, depths: np.ndarray) -> ProfileBatch:
    """ProfileBatch for one query against every shard of a partition."""
    q = np.asarray(query, dtype=np.float64)
    if q.ndim != 1 or q.size != partition.dim:
        raise ValueError("query dimension does not match the partition")
    depths = np.asarray(depths, dtype=np.int64)
    if depths.shape != (len(partition),):
        raise ValueError("depths must give one entry per shard")
    if np.any(depths < 1) or np.any(depths > partition.sizes):
        raise ValueError("each depth must lie in [1, shard size]")
    prefix = build_prefix_tensor(partition, q[None, :], depths)[0]
    ids = np.arange(1, len(partition) + 1, dtype=np.int64)
    return ProfileBatch(shard_ids=ids, k_max=depths.copy(), prefix_sums=prefix)


def qiao_depths(sizes: np.ndarray, cfg: StoppingConfig) -> np.ndarray:
    """Vectorized twin of baselines.qiao_k over a size vector."""
    scale = cfg.N ** (-cfg.d / (2 + cfg.d))
    k = np.ceil(sizes * scale).astype(np.int64)
    return np.clip(k, 1, sizes)


def required_depths(kind: ClassifierKind, sizes: np.ndarray, cfg: StoppingConfig) -> np.ndarray:
    """Per-shard profile depth each classifier needs."""
    n1 = int(sizes[0])
    if kind is ClassifierKind.DANN:
        cap = min(k1_bound(n1, cfg), n1)
        return np.minimum((cap * sizes + n1 - 1) // n1, sizes)
    if kind is ClassifierKind.DANN_NES:
        return sizes.copy()
    if kind is ClassifierKind.DNN_QIAO:
        return qiao_depths(sizes, cfg)
    if kind is ClassifierKind.D1NN:
        return np.ones_like(sizes)
    raise ValueError(f"unhandled classifier kind {kind!r}")


def _classify_chunk(
    partition: Partition,
    queries: np.ndarray,
    kind: ClassifierKind,
    cfg: StoppingConfig,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Labels, k1 choices (-1 where not applicable) and etas for a query chunk."""
    sizes = partition.sizes
    n1 = int(sizes[0])
    depths = required_depths(kind, sizes, cfg)
    prefix = build_prefix_tensor(partition, queries, depths)
    m = len(partition)

    if kind in (ClassifierKind.DANN, ClassifierKind.DANN_NES):
        cap = min(k1_bound(n1, cfg), n1) if kind is ClassifierKind.DANN else n1
        kj = depth_matrix(cap, sizes)
        stop, eta, _ = scan_first_crossing(prefix, kj, stopping_threshold(cfg))
        eta_hat = np.take_along_axis(eta, stop[:, None], axis=1)[:, 0]
        k1_hat = stop.astype(np.int64) + 1
    else:
        ks = depths  # fixed depths: qiao's rule or all ones
        counts = prefix[:, np.arange(m), ks - 1].sum(axis=1)
        eta_hat = counts / int(ks.sum())
        k1_hat = np.full(queries.shape[0], -1, dtype=np.int64)

    labels = (eta_hat >= 0.5).astype(np.int64)
    return labels, k1_hat, eta_hat


def evaluate_query(
    partition: Partition,
    query: np.ndarray,
    kind: ClassifierKind,
    cfg: StoppingConfig,
) -> tuple[int, int | None, float]:
    """Classify one query point; returns (label, k1_hat or None, eta)."""
    q = np.asarray(query, dtype=np.float64)
    labels, k1s, etas = _classify_chunk(partition, q[None, :], kind, cfg)
    k1 = int(k1s[0]) if k1s[0] >= 0 else None
    return int(labels[0]), k1, float(etas[0])


def _eval_chunk_worker(payload):
    features, labels, sizes, offsets, queries, kind_value, cfg_args = payload
    partition = Partition(features=features, labels=labels, sizes=sizes, offsets=offsets)
    return _classify_chunk(partition, queries, ClassifierKind(kind_value), StoppingConfig(*cfg_args))


def evaluate_queries(
    partition: Partition,
    queries: np.ndarray,
    kind: ClassifierKind,
    cfg: StoppingConfig,
    workers: int = 1,
    chunk_size: int = 256,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Classify many query points; parallelizes over query chunks.

    Output is independent of ``workers`` and ``chunk_size``: chunks are pure
    functions of their inputs and are reassembled in input order.
    """
    queries = np.ascontiguousarray(queries, dtype=np.float64)
    if queries.ndim != 2 or queries.shape[1] != partition.dim:
        raise ValueError("queries must be (n, d) with the partition's dimension")
    chunks = [queries[i : i + chunk_size] for i in range(0, queries.shape[0], chunk_size)]
    if workers <= 1 or len(chunks) <= 1:
        parts = [_classify_chunk(partition, c, kind, cfg) for c in chunks]
    else:
        payloads = [
            (
                partition.features,
                partition.labels,
                partition.sizes,
                partition.offsets,
                c,
                kind.value,
                (cfg.N, cfg.d, cfg.include_log_in_bound),
            )
            for c in chunks
        ]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_eval_chunk_worker, payloads))
    labels = np.concatenate([p[0] for p in parts])
    k1s = np.concatenate([p[1] for p in parts])
    etas = np.concatenate([p[2] for p in parts])
    return labels, k1s, etas
