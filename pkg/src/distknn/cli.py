"""Command-line surface: simulation grids, the census pipeline, one-off
classification of CSV data, and a self-test of the search machinery.

Configuration comes from an optional ``key = value`` file; every key has a
flag of the same name that overrides it. ``--seed``, ``--threads`` and
``--output`` are available on every subcommand. Results land in the output
directory as results.csv / results.json plus a manifest.json recording the
effective config and library versions.
"""

from __future__ import annotations

import argparse
import json
import os
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .adaptive import (
    StoppingConfig,
    StopReason,
    adaptive_select,
    stopping_statistic,
    stopping_threshold,
    sub_k,
)
from .baselines import ClassifierKind
from .engine import evaluate_queries, profile_partition, required_depths
from .estimator import aggregate, local_estimate
from .neighbors import Shard, brute_force_profile, neighbor_profile
from .realdata import (
    apply_scaling,
    evaluate_real,
    fit_scaling,
    ingest_adult,
    records_to_arrays,
    train_test_split,
)
from .simharness import (
    ExperimentConfig,
    ExperimentResult,
    partition_proportional,
    partition_uniform,
    run_experiment,
    shard_count,
)

DATA_DIR_ENV = "DISTKNN_DATA_DIR"


# ---------------------------------------------------------------------------
# config file handling

def parse_config_file(path) -> dict[str, str]:
    """Read a flat ``key = value`` file; '#' starts a comment."""
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            key, value = line.split("=", 1)
            values[key.strip().lower().replace("-", "_")] = value.strip()
    return values


def _as_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _as_float_list(text: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in text.replace(",", " ").split())


def _as_name_list(text: str) -> tuple[str, ...]:
    return tuple(tok for tok in text.replace(",", " ").split())


def _setting(args, file_cfg: dict[str, str], key: str, default, convert):
    """Flag > config file > default."""
    flag_value = getattr(args, key, None)
    if flag_value is not None:
        return flag_value
    if key in file_cfg:
        try:
            return convert(file_cfg[key])
        except ValueError as exc:
            raise ValueError(f"config key {key!r}: {exc}") from exc
    return default


def build_experiment_config(args, file_cfg: dict[str, str]) -> ExperimentConfig:
    classifiers = _setting(args, file_cfg, "classifiers", None, _as_name_list)
    return ExperimentConfig(
        N=_setting(args, file_cfg, "n", 20000, int),
        kappa=_setting(args, file_cfg, "kappa", 0.60, float),
        epsilons=_setting(args, file_cfg, "epsilons", tuple(i / 10 for i in range(10)), _as_float_list),
        split=_setting(args, file_cfg, "split", "uniform", str),
        runs=_setting(args, file_cfg, "runs", 500, int),
        seed=_setting(args, file_cfg, "seed", 0, int),
        classifiers=classifiers if classifiers is not None else tuple(k.value for k in ClassifierKind),
        queries_per_run=_setting(args, file_cfg, "queries_per_run", 1, int),
        include_log_in_bound=_setting(args, file_cfg, "include_log_in_bound", True, _as_bool),
    )


# ---------------------------------------------------------------------------
# outputs

def _manifest(command: str, cfg_dict: dict, seed: int, threads: int) -> dict:
    return {
        "command": command,
        "seed": seed,
        "threads": threads,
        "config": cfg_dict,
        "versions": {
            "distknn": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
    }


def write_result_files(result: ExperimentResult, outdir: Path, manifest: dict) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    result.write_csv(outdir / "results.csv")
    result.write_json(outdir / "results.json")
    with open(outdir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# subcommands

def cmd_simulate(args) -> int:
    file_cfg = parse_config_file(args.config) if args.config else {}
    cfg = build_experiment_config(args, file_cfg)
    print(f"simulate: N={cfg.N} kappa={cfg.kappa} split={cfg.split} runs={cfg.runs} "
          f"epsilons={list(cfg.epsilons)} classifiers={[k.value for k in cfg.classifiers]}")
    result = run_experiment(cfg, workers=args.threads)
    outdir = Path(args.output)
    write_result_files(result, outdir, _manifest("simulate", cfg.to_dict(), cfg.seed, args.threads))
    for row in result.rows:
        print(f"  {row.classifier:<9s} eps={row.epsilon:<4g} m={row.m:<6d} "
              f"agreement={row.agreement_rate:.4f} (+-{row.mc_stderr:.4f}) "
              f"time={row.mean_runtime_s * 1e3:.2f}ms")
    if result.failures:
        print(f"  {len(result.failures)} run(s) failed; see results.json", file=sys.stderr)
    print(f"wrote {outdir / 'results.csv'}")
    return 0


def _locate_adult_file(args) -> Path:
    if args.data:
        return Path(args.data)
    env_dir = os.environ.get(DATA_DIR_ENV)
    if env_dir:
        return Path(env_dir) / "adult.data"
    return Path("data") / "adult.data"


def cmd_adult(args) -> int:
    path = _locate_adult_file(args)
    if not path.exists():
        print(
            f"error: census file not found at {path}; pass --data or set ${DATA_DIR_ENV}",
            file=sys.stderr,
        )
        return 1
    file_cfg = parse_config_file(args.config) if args.config else {}
    records = ingest_adult(path)
    print(f"adult: {len(records)} records from {path}")
    feats, labels = records_to_arrays(records)
    scaling = fit_scaling(feats)
    full = Shard(1, apply_scaling(feats, scaling), labels)
    seed = _setting(args, file_cfg, "seed", 0, int)
    split_rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(0xAD,)))
    test_fraction = _setting(args, file_cfg, "test_fraction", 0.2, float)
    split = train_test_split(full, test_fraction, split_rng)
    print(f"adult: train={split.train.size} test={split.test.size}")
    classifiers = _setting(args, file_cfg, "classifiers", None, _as_name_list)
    cfg = ExperimentConfig(
        N=split.train.size,
        kappa=0.6,  # unused by the real-data path
        epsilons=_setting(args, file_cfg, "epsilons", tuple(i / 10 for i in range(10)), _as_float_list),
        split=_setting(args, file_cfg, "split", "proportional", str),
        runs=1,
        seed=seed,
        classifiers=classifiers if classifiers is not None
        else ("dann", "dnn_qiao", "d1nn"),
        include_log_in_bound=_setting(args, file_cfg, "include_log_in_bound", True, _as_bool),
    )
    result = evaluate_real(split.train, split.test, cfg, workers=args.threads)
    outdir = Path(args.output)
    manifest = _manifest("adult", cfg.to_dict(), seed, args.threads)
    manifest["data_file"] = str(path)
    manifest["test_fraction"] = test_fraction
    write_result_files(result, outdir, manifest)
    majority = float(max(split.test.labels.mean(), 1 - split.test.labels.mean()))
    print(f"  majority-class accuracy: {majority:.4f}")
    for row in result.rows:
        print(f"  {row.classifier:<9s} eps={row.epsilon:<4g} m={row.m:<6d} "
              f"accuracy={row.agreement_rate:.4f} error={1 - row.agreement_rate:.4f} "
              f"time={row.mean_runtime_s:.2f}s")
    print(f"wrote {outdir / 'results.csv'}")
    return 0


def _read_csv_columns(path) -> tuple[list[str], list[list[str]]]:
    import csv as _csv

    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = _csv.reader(fh)
        rows = [row for row in reader if row]
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    return header, rows[1:]


def _parse_feature_rows(path, rows, columns, header) -> np.ndarray:
    idx = [header.index(c) for c in columns]
    out = np.empty((len(rows), len(columns)), dtype=np.float64)
    for i, row in enumerate(rows):
        try:
            out[i] = [float(row[j]) for j in idx]
        except (ValueError, IndexError) as exc:
            raise ValueError(f"{path}: row {i + 2}: {exc}") from exc
    return out


def cmd_classify(args) -> int:
    header, rows = _read_csv_columns(args.train)
    if args.label_col not in header:
        raise ValueError(f"label column {args.label_col!r} not in {args.train}")
    feature_cols = [c for c in header if c != args.label_col]
    feats = _parse_feature_rows(args.train, rows, feature_cols, header)
    label_idx = header.index(args.label_col)
    labels = np.array([int(float(r[label_idx])) for r in rows], dtype=np.int64)
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")

    q_header, q_rows = _read_csv_columns(args.queries)
    missing = [c for c in feature_cols if c not in q_header]
    if missing:
        raise ValueError(f"query file lacks feature columns {missing}")
    queries_raw = _parse_feature_rows(args.queries, q_rows, feature_cols, q_header)

    scaling = fit_scaling(feats)
    train = Shard(1, apply_scaling(feats, scaling), labels)
    queries = apply_scaling(queries_raw, scaling)

    m = args.shards if args.shards else shard_count(train.size, args.epsilon)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=args.seed, spawn_key=(1,)))
    part = (partition_uniform if args.split == "uniform" else partition_proportional)(train, m, rng)
    kind = ClassifierKind.parse(args.classifier)
    stopping = StoppingConfig(N=train.size, d=train.dim, include_log_in_bound=args.include_log_in_bound)
    labels_out, k1s, etas = evaluate_queries(part, queries, kind, stopping, workers=args.threads)

    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)
    pred_path = outdir / "predictions.csv"
    with open(pred_path, "w", encoding="utf-8") as fh:
        fh.write("row,predicted_label,eta,k1\n")
        for i in range(labels_out.size):
            k1 = "" if k1s[i] < 0 else int(k1s[i])
            fh.write(f"{i},{int(labels_out[i])},{float(etas[i])!r},{k1}\n")
    manifest = _manifest(
        "classify",
        {
            "train": str(args.train),
            "queries": str(args.queries),
            "classifier": kind.value,
            "m": m,
            "split": args.split,
            "feature_columns": feature_cols,
        },
        args.seed,
        args.threads,
    )
    with open(outdir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    print(f"classified {labels_out.size} queries with {kind.value} over m={m} shards")
    print(f"wrote {pred_path}")
    return 0


def run_selftest(instances: int, seed: int, verbose: bool = True) -> int:
    """Exercise the exact-search oracle and the stopping-rule audit.

    Returns the number of failed checks (0 means healthy).
    """
    rng = np.random.default_rng(seed)
    failures = 0

    mismatches = 0
    for _ in range(instances):
        n = int(rng.integers(1, 120))
        tie_prone = rng.random() < 0.3
        feats = (
            rng.choice(np.array([0.0, 0.25, 0.5, 1.0]), size=(n, 3)) if tie_prone else rng.random((n, 3))
        )
        shard = Shard(1, feats, rng.integers(0, 2, n))
        k = int(rng.integers(1, n + 1))
        query = rng.random(3)
        fast = neighbor_profile(shard, query, k)
        slow = brute_force_profile(shard, query, k)
        if not (
            np.array_equal(fast.prefix_sums, slow.prefix_sums)
            and np.array_equal(fast.distances, slow.distances)
        ):
            mismatches += 1
    failures += mismatches
    if verbose:
        state = "ok" if mismatches == 0 else f"{mismatches} MISMATCHES"
        print(f"selftest: search vs brute-force oracle on {instances} instances: {state}")

    audit_bad = 0
    audits = max(20, instances // 10)
    for _ in range(audits):
        m = int(rng.integers(1, 6))
        N = int(rng.integers(8 * m, 800))
        cfg = StoppingConfig(N=N, d=3)
        data = Shard(1, rng.random((N, 3)), rng.integers(0, 2, N))
        part = (partition_uniform if rng.random() < 0.5 else partition_proportional)(data, m, rng)
        depths = required_depths(ClassifierKind.DANN, part.sizes, cfg)
        batch = profile_partition(part, rng.random(3), depths)
        sel = adaptive_select(batch, part.sizes, cfg)
        threshold = stopping_threshold(cfg)
        n1 = int(part.sizes[0])
        replay_ok = True
        for k1 in range(1, sel.k1_hat + 1):
            ks = [sub_k(k1, n1, int(nj)) for nj in part.sizes]
            agg = aggregate([local_estimate(batch.profile(j), ks[j]) for j in range(len(batch))])
            r = stopping_statistic(agg)
            if k1 < sel.k1_hat and r > threshold:
                replay_ok = False
            if k1 == sel.k1_hat:
                crossed = r > threshold
                if crossed != (sel.stop_reason is StopReason.THRESHOLD_CROSSED):
                    replay_ok = False
        if not replay_ok:
            audit_bad += 1
    failures += audit_bad
    if verbose:
        state = "ok" if audit_bad == 0 else f"{audit_bad} BAD WALKS"
        print(f"selftest: stopping-rule audit on {audits} random searches: {state}")
    return failures


def cmd_selftest(args) -> int:
    failures = run_selftest(args.instances, args.seed)
    if failures:
        print(f"selftest FAILED with {failures} mismatching checks", file=sys.stderr)
        return 1
    print("selftest passed")
    return 0


# ---------------------------------------------------------------------------
# parser

def _add_common_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
    sub.add_argument("--threads", type=int, default=1, help="worker processes")
    sub.add_argument("--output", default="results", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="distknn",
        description="Distributed adaptive nearest-neighbor classification toolkit",
    )
    parser.add_argument("--version", action="version", version=f"distknn {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    sim = subs.add_parser("simulate", help="run the synthetic benchmark grid")
    sim.add_argument("--config", help="key = value config file")
    sim.add_argument("--n", type=int, default=None, help="total sample size N")
    sim.add_argument("--kappa", type=float, default=None, help="signal floor in (0, 1]")
    sim.add_argument("--epsilons", type=_as_float_list, default=None, help="comma list, m = ceil(N^eps)")
    sim.add_argument("--split", choices=["uniform", "proportional"], default=None)
    sim.add_argument("--runs", type=int, default=None, help="simulation replications")
    sim.add_argument("--classifiers", type=_as_name_list, default=None,
                     help="comma list from dann,dann_nes,dnn_qiao,d1nn")
    sim.add_argument("--queries-per-run", dest="queries_per_run", type=int, default=None)
    sim.add_argument("--include-log-in-bound", dest="include_log_in_bound",
                     type=_as_bool, default=None, metavar="BOOL")
    _add_common_flags(sim)
    sim.set_defaults(func=cmd_simulate)

    adult = subs.add_parser("adult", help="run the census-income pipeline")
    adult.add_argument("--config", help="key = value config file")
    adult.add_argument("--data", help=f"path to adult.data (default ${DATA_DIR_ENV}/adult.data)")
    adult.add_argument("--epsilons", type=_as_float_list, default=None)
    adult.add_argument("--split", choices=["uniform", "proportional"], default=None)
    adult.add_argument("--classifiers", type=_as_name_list, default=None)
    adult.add_argument("--test-fraction", dest="test_fraction", type=float, default=None)
    adult.add_argument("--include-log-in-bound", dest="include_log_in_bound",
                       type=_as_bool, default=None, metavar="BOOL")
    _add_common_flags(adult)
    adult.set_defaults(func=cmd_adult)

    cls = subs.add_parser("classify", help="classify query rows from CSV files")
    cls.add_argument("--train", required=True, help="labeled CSV with header")
    cls.add_argument("--queries", required=True, help="CSV with the same feature columns")
    cls.add_argument("--label-col", default="label")
    cls.add_argument("--classifier", default="dann")
    cls.add_argument("--shards", type=int, default=None, help="explicit shard count m")
    cls.add_argument("--epsilon", type=float, default=0.0, help="m = ceil(N^eps) when --shards is absent")
    cls.add_argument("--split", choices=["uniform", "proportional"], default="uniform")
    cls.add_argument("--include-log-in-bound", dest="include_log_in_bound",
                     type=_as_bool, default=True, metavar="BOOL")
    _add_common_flags(cls)
    cls.set_defaults(func=cmd_classify)

    selftest = subs.add_parser("selftest", help="oracle-equivalence and audit checks")
    selftest.add_argument("--instances", type=int, default=200)
    _add_common_flags(selftest)
    selftest.set_defaults(func=cmd_selftest)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "seed", None) is None:
        args.seed = 0
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
