"""Synthetic benchmark harness: data model, splitting schemes, and the
classifier-accuracy grid.

Features are uniform on [0, 1]^3 and labels are Bernoulli draws from
eta(x) = max{(5/3)(1 - |x|/sqrt(3)), kappa}, clipped at 1 so the generative
model is well defined near the origin. The grid runs every enabled classifier
over a range of shard counts m = ceil(N^eps), scoring each run by agreement
with the oracle rule 1{eta(x) >= 1/2} and recording per-classifier wall time.

Every run draws its random stream from (seed, eps_index, run_index), so runs
can execute in any order or in parallel without changing any result.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .adaptive import StoppingConfig
from .baselines import ClassifierKind
from .engine import Partition, evaluate_query, query_distance_matrix
from .neighbors import Shard

__all__ = [
    "SyntheticModel",
    "ExperimentConfig",
    "ResultRow",
    "ExperimentResult",
    "eta_true",
    "generate_sample",
    "bayes_classify",
    "partition_uniform",
    "partition_proportional",
    "shard_count",
    "run_experiment",
]

_SQRT3 = math.sqrt(3.0)

DEFAULT_CLASSIFIERS = (
    ClassifierKind.DANN,
    ClassifierKind.DANN_NES,
    ClassifierKind.DNN_QIAO,
    ClassifierKind.D1NN,
)


@dataclass(frozen=True)
class SyntheticModel:
    """Conditional-probability model on [0, 1]^3 with signal floor kappa.

    The benchmark uses kappa in {0.55, 0.60, 0.65}; any kappa in (0, 1] is
    accepted so the decision boundary itself can be exercised.
    """

    kappa: float
    d: int = 3

    def __post_init__(self) -> None:
        if not 0.0 < self.kappa <= 1.0:
            raise ValueError(f"kappa={self.kappa} outside (0, 1]")
        if self.d != 3:
            raise ValueError("the synthetic model is three-dimensional")


def eta_batch(points: np.ndarray, model: SyntheticModel) -> np.ndarray:
    """Vectorized eta over rows of ``points``."""
    norms = np.sqrt((points * points).sum(axis=-1))
    linear = (5.0 / 3.0) * (1.0 - norms / _SQRT3)
    return np.minimum(1.0, np.maximum(linear, model.kappa))


def eta_true(x: np.ndarray, model: SyntheticModel) -> float:
    """Conditional probability P(Y=1 | X=x), clipped into [kappa, 1]."""
    xv = np.asarray(x, dtype=np.float64)
    if xv.shape != (3,):
        raise ValueError("x must be a 3-vector")
    return float(eta_batch(xv[None, :], model)[0])


def bayes_classify(x: np.ndarray, model: SyntheticModel) -> int:
    """Oracle rule: 1 iff eta(x) >= 1/2."""
    return 1 if eta_true(x, model) >= 0.5 else 0


def generate_sample(n: int, model: SyntheticModel, rng: np.random.Generator) -> Shard:
    """n i.i.d. points uniform on [0, 1]^3 with Bernoulli(eta) labels."""
    if n < 1:
        raise ValueError("n must be >= 1")
    feats = rng.random((n, 3))
    labels = (rng.random(n) < eta_batch(feats, model)).astype(np.int64)
    return Shard(1, feats, labels)


def partition_uniform(data: Shard, m: int, rng: np.random.Generator) -> Partition:
    """Random split into m shards whose sizes differ by at most one."""
    if not 1 <= m <= data.size:
        raise ValueError(f"m={m} outside [1, {data.size}]")
    base, rem = divmod(data.size, m)
    sizes = np.full(m, base, dtype=np.int64)
    sizes[:rem] += 1
    return Partition.from_shard(data, sizes, rng)


def partition_proportional(data: Shard, m: int, rng: np.random.Generator) -> Partition:
    """Random split into m shards with sizes close to the ratio 1:2:...:m.

    Sizes come from largest-remainder apportionment of the quotas
    N*j / (1 + ... + m); every shard is kept nonempty by shaving the largest
    shards when small quotas round to zero.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if m > data.size:
        raise ValueError(f"m={m} too large for every shard to be nonempty (N={data.size})")
    ranks = np.arange(1, m + 1, dtype=np.int64)
    quota = data.size * ranks / (m * (m + 1) // 2)
    sizes = np.floor(quota).astype(np.int64)
    remainder = quota - sizes
    leftover = data.size - int(sizes.sum())
    order = np.lexsort((-ranks, -remainder))
    sizes[order[:leftover]] += 1
    lifted = int((sizes == 0).sum())
    sizes[sizes == 0] = 1
    while lifted > 0:
        top = int(sizes.max())
        candidates = np.flatnonzero(sizes == top)
        take = min(lifted, candidates.size)
        sizes[candidates[-take:]] -= 1
        lifted -= take
    sizes = np.sort(sizes)[::-1].copy()
    return Partition.from_shard(data, sizes, rng)


def shard_count(N: int, eps: float) -> int:
    """Number of shards m = ceil(N^eps)."""
    return math.ceil(N**eps)


@dataclass(frozen=True)
class ExperimentConfig:
    """One grid specification for the synthetic benchmark."""

    N: int
    kappa: float
    epsilons: tuple[float, ...]
    split: str = "uniform"
    runs: int = 500
    seed: int = 0
    classifiers: tuple[ClassifierKind, ...] = DEFAULT_CLASSIFIERS
    queries_per_run: int = 1
    include_log_in_bound: bool = True

    def __post_init__(self) -> None:
        if self.N < 2:
            raise ValueError("N must be >= 2")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if self.queries_per_run < 1:
            raise ValueError("queries_per_run must be >= 1")
        if self.split not in ("uniform", "proportional"):
            raise ValueError(f"split must be 'uniform' or 'proportional', got {self.split!r}")
        eps = tuple(float(e) for e in self.epsilons)
        if not eps:
            raise ValueError("need at least one epsilon")
        for e in eps:
            if not 0.0 <= e < 1.0:
                raise ValueError(f"epsilon {e} outside [0, 1)")
        object.__setattr__(self, "epsilons", eps)
        kinds = tuple(k if isinstance(k, ClassifierKind) else ClassifierKind.parse(k)
                      for k in self.classifiers)
        if not kinds:
            raise ValueError("need at least one classifier")
        object.__setattr__(self, "classifiers", kinds)

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "kappa": self.kappa,
            "epsilons": list(self.epsilons),
            "split": self.split,
            "runs": self.runs,
            "seed": self.seed,
            "classifiers": [k.value for k in self.classifiers],
            "queries_per_run": self.queries_per_run,
            "include_log_in_bound": self.include_log_in_bound,
        }


@dataclass
class ResultRow:
    """Aggregated outcome for one (classifier, epsilon) cell."""

    classifier: str
    epsilon: float
    m: int
    agreement_rate: float
    mc_stderr: float
    mean_runtime_s: float
    k1_min: int | None = None
    k1_med: float | None = None
    k1_max: int | None = None

    def to_dict(self) -> dict:
        return {
            "classifier": self.classifier,
            "epsilon": self.epsilon,
            "m": self.m,
            "agreement_rate": self.agreement_rate,
            "mc_stderr": self.mc_stderr,
            "mean_runtime_s": self.mean_runtime_s,
            "k1_min": self.k1_min,
            "k1_med": self.k1_med,
            "k1_max": self.k1_max,
        }


CSV_COLUMNS = [
    "classifier",
    "epsilon",
    "m",
    "agreement_rate",
    "mc_stderr",
    "mean_runtime_s",
    "k1_min",
    "k1_med",
    "k1_max",
]


@dataclass
class ExperimentResult:
    """Grid output: one row per (classifier, epsilon) plus per-run samples.

    ``agreement_samples[(classifier, eps)]`` holds the 0/1 agreement
    indicators in run-major order; indicators for different classifiers are
    paired (same run, same data, same query).
    """

    config: ExperimentConfig
    rows: list[ResultRow]
    agreement_samples: dict = field(default_factory=dict)
    k1_samples: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    def row(self, classifier: ClassifierKind | str, eps: float) -> ResultRow:
        name = classifier.value if isinstance(classifier, ClassifierKind) else classifier
        for r in self.rows:
            if r.classifier == name and r.epsilon == eps:
                return r
        raise KeyError((name, eps))

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in self.rows:
            writer.writerow(
                [
                    r.classifier,
                    repr(r.epsilon),
                    r.m,
                    repr(r.agreement_rate),
                    repr(r.mc_stderr),
                    repr(r.mean_runtime_s),
                    "" if r.k1_min is None else r.k1_min,
                    "" if r.k1_med is None else repr(float(r.k1_med)),
                    "" if r.k1_max is None else r.k1_max,
                ]
            )
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_csv_text())

    def to_json_obj(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "rows": [r.to_dict() for r in self.rows],
            "failures": [list(f) for f in self.failures],
        }

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_obj(), fh, indent=2)
            fh.write("\n")


def _partition_for(cfg: ExperimentConfig, data: Shard, m: int, rng: np.random.Generator) -> Partition:
    if cfg.split == "uniform":
        return partition_uniform(data, m, rng)
    return partition_proportional(data, m, rng)


def _simulate_run(args: tuple[ExperimentConfig, int, int]):
    """One simulation run: fresh sample, one partition, one query batch.

    Returns (eps_idx, run_idx, {classifier: (agree_bits, k1s, elapsed)}) or an
    error marker; never raises, so a bad run cannot abort the grid.
    """
    cfg, eps_idx, run_idx = args
    try:
        eps = cfg.epsilons[eps_idx]
        rng = np.random.default_rng(np.random.SeedSequence(entropy=cfg.seed, spawn_key=(eps_idx, run_idx)))
        model = SyntheticModel(cfg.kappa)
        data = generate_sample(cfg.N, model, rng)
        m = shard_count(cfg.N, eps)
        part = _partition_for(cfg, data, m, rng)
        queries = rng.random((cfg.queries_per_run, 3))
        oracle = (eta_batch(queries, model) >= 0.5).astype(np.int64)
        stopping = StoppingConfig(N=cfg.N, d=3, include_log_in_bound=cfg.include_log_in_bound)
        # untimed warm-up so the first classifier measured is not also charged
        # for pulling the fresh partition into cache
        query_distance_matrix(part.features, queries[:1])
        part.labels.sum()
        out = {}
        for kind in cfg.classifiers:
            start = time.perf_counter()
            labels = np.empty(cfg.queries_per_run, dtype=np.int64)
            k1s: list[int] = []
            for qi in range(cfg.queries_per_run):
                label, k1, _ = evaluate_query(part, queries[qi], kind, stopping)
                labels[qi] = label
                if k1 is not None:
                    k1s.append(k1)
            elapsed = time.perf_counter() - start
            out[kind.value] = ((labels == oracle).astype(np.int8), k1s, elapsed)
        return eps_idx, run_idx, out
    except Exception as exc:  # recorded, not raised
        return eps_idx, run_idx, f"{type(exc).__name__}: {exc}"


def run_experiment(cfg: ExperimentConfig, workers: int = 1) -> ExperimentResult:
    """Execute the full (classifier x epsilon) grid of ``cfg``.

    ``workers`` > 1 distributes runs over processes; results are identical to
    the single-process run because every run owns an independent seed stream
    and aggregation is order-independent.
    """
    tasks = [(cfg, ei, ri) for ei in range(len(cfg.epsilons)) for ri in range(cfg.runs)]
    if workers <= 1:
        outcomes = [_simulate_run(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_simulate_run, tasks, chunksize=max(1, len(tasks) // (workers * 8))))

    failures = []
    bits: dict[tuple[str, int], list] = {}
    k1s: dict[tuple[str, int], list] = {}
    times: dict[tuple[str, int], list] = {}
    for eps_idx, run_idx, payload in outcomes:
        if isinstance(payload, str):
            failures.append((cfg.epsilons[eps_idx], run_idx, payload))
            continue
        for name, (agree, run_k1s, elapsed) in payload.items():
            key = (name, eps_idx)
            bits.setdefault(key, []).append(agree)
            k1s.setdefault(key, []).extend(run_k1s)
            times.setdefault(key, []).append(elapsed)

    rows = []
    agreement_samples = {}
    k1_samples = {}
    for eps_idx, eps in enumerate(cfg.epsilons):
        m = shard_count(cfg.N, eps)
        for kind in cfg.classifiers:
            key = (kind.value, eps_idx)
            if key not in bits:
                continue
            sample = np.concatenate(bits[key])
            rate = float(sample.mean())
            stderr = math.sqrt(rate * (1.0 - rate) / sample.size)
            ks = np.array(k1s[key], dtype=np.int64)
            rows.append(
                ResultRow(
                    classifier=kind.value,
                    epsilon=eps,
                    m=m,
                    agreement_rate=rate,
                    mc_stderr=stderr,
                    mean_runtime_s=float(np.mean(times[key])),
                    k1_min=int(ks.min()) if ks.size else None,
                    k1_med=float(np.median(ks)) if ks.size else None,
                    k1_max=int(ks.max()) if ks.size else None,
                )
            )
            agreement_samples[(kind.value, eps)] = sample
            if ks.size:
                k1_samples[(kind.value, eps)] = ks
    if not rows:
        raise RuntimeError(f"every run failed; first failure: {failures[0] if failures else 'none'}")
    return ExperimentResult(
        config=cfg,
        rows=rows,
        agreement_samples=agreement_samples,
        k1_samples=k1_samples,
        failures=failures,
    )
