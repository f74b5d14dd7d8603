import json
import math

import numpy as np
import pytest

from distknn.baselines import ClassifierKind
from distknn.simharness import (
    ExperimentConfig,
    SyntheticModel,
    bayes_classify,
    eta_batch,
    eta_true,
    generate_sample,
    partition_proportional,
    partition_uniform,
    run_experiment,
    shard_count,
)


class TestEtaTrue:
    def test_corner_point_hits_floor(self):
        for kappa in (0.55, 0.60, 0.65):
            assert eta_true(np.ones(3), SyntheticModel(kappa)) == pytest.approx(kappa, abs=1e-12)

    def test_mid_radius_linear_value(self):
        # |x| = sqrt(3)/2 at x = (0.5, 0.5, 0.5), so the slope term is 5/6
        val = eta_true(np.full(3, 0.5), SyntheticModel(0.55))
        assert val == pytest.approx(5 / 6, abs=1e-12)

    def test_origin_clipped_to_one(self):
        assert eta_true(np.zeros(3), SyntheticModel(0.55)) == 1.0

    def test_kappa_validated(self):
        with pytest.raises(ValueError):
            SyntheticModel(0.0)
        with pytest.raises(ValueError):
            SyntheticModel(1.2)

    def test_dimension_validated(self):
        with pytest.raises(ValueError):
            eta_true(np.zeros(2), SyntheticModel(0.6))


class TestBayesClassify:
    def test_always_one_above_half(self):
        rng = np.random.default_rng(0)
        for kappa in (0.55, 0.65):
            model = SyntheticModel(kappa)
            assert all(bayes_classify(rng.random(3), model) == 1 for _ in range(50))

    def test_boundary_with_low_floor(self):
        # sub-1/2 floor exercises the indicator: at the far corner eta = 0.3
        model = SyntheticModel(0.3)
        assert bayes_classify(np.ones(3), model) == 0
        assert bayes_classify(np.zeros(3), model) == 1


def grid_mean_eta(kappa, cells=160):
    """Midpoint-rule integral of eta over the unit cube (independent oracle)."""
    centers = (np.arange(cells) + 0.5) / cells
    total = 0.0
    model = SyntheticModel(kappa)
    for x in centers:
        xx, yy = np.meshgrid(centers, centers, indexing="ij")
        pts = np.stack([np.full(xx.size, x), xx.ravel(), yy.ravel()], axis=1)
        total += eta_batch(pts, model).sum()
    return total / cells**3


class TestGenerateSample:
    def test_support(self):
        rng = np.random.default_rng(1)
        shard = generate_sample(500, SyntheticModel(0.6), rng)
        assert shard.features.min() >= 0.0 and shard.features.max() < 1.0
        assert set(np.unique(shard.labels)) <= {0, 1}

    def test_seed_determinism(self):
        a = generate_sample(100, SyntheticModel(0.6), np.random.default_rng(7))
        b = generate_sample(100, SyntheticModel(0.6), np.random.default_rng(7))
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_mean_label_matches_integrated_eta(self):
        n = 100_000
        kappa = 0.60
        expected = grid_mean_eta(kappa)
        shard = generate_sample(n, SyntheticModel(kappa), np.random.default_rng(3))
        se = math.sqrt(expected * (1 - expected) / n)
        assert abs(shard.labels.mean() - expected) < 3 * se


class TestPartitionUniform:
    def test_remainder_distribution(self):
        rng = np.random.default_rng(2)
        data = generate_sample(10, SyntheticModel(0.6), rng)
        part = partition_uniform(data, 3, rng)
        assert part.sizes.tolist() == [4, 3, 3]

    def test_identity_partition(self):
        rng = np.random.default_rng(2)
        data = generate_sample(12, SyntheticModel(0.6), rng)
        part = partition_uniform(data, 1, rng)
        assert part.sizes.tolist() == [12]

    def test_singleton_split(self):
        rng = np.random.default_rng(2)
        data = generate_sample(6, SyntheticModel(0.6), rng)
        part = partition_uniform(data, 6, rng)
        assert part.sizes.tolist() == [1] * 6

    def test_m_out_of_range(self):
        rng = np.random.default_rng(2)
        data = generate_sample(5, SyntheticModel(0.6), rng)
        with pytest.raises(ValueError):
            partition_uniform(data, 0, rng)
        with pytest.raises(ValueError):
            partition_uniform(data, 6, rng)

    def test_union_preserves_data(self):
        rng = np.random.default_rng(8)
        data = generate_sample(57, SyntheticModel(0.6), rng)
        part = partition_uniform(data, 9, rng)
        original = np.column_stack([data.features, data.labels])
        rebuilt = np.column_stack([part.features, part.labels])
        key = lambda a: a[np.lexsort(a.T)]
        np.testing.assert_array_equal(key(original), key(rebuilt))


class TestPartitionProportional:
    def test_exact_ratio(self):
        rng = np.random.default_rng(4)
        data = generate_sample(60, SyntheticModel(0.6), rng)
        part = partition_proportional(data, 3, rng)
        assert part.sizes.tolist() == [30, 20, 10]

    def test_largest_remainder_small_case(self):
        rng = np.random.default_rng(4)
        data = generate_sample(7, SyntheticModel(0.6), rng)
        part = partition_proportional(data, 3, rng)
        assert part.sizes.tolist() == [4, 2, 1]

    def test_identity(self):
        rng = np.random.default_rng(4)
        data = generate_sample(9, SyntheticModel(0.6), rng)
        assert partition_proportional(data, 1, rng).sizes.tolist() == [9]

    def test_every_shard_nonempty_under_extreme_m(self):
        rng = np.random.default_rng(4)
        data = generate_sample(100, SyntheticModel(0.6), rng)
        part = partition_proportional(data, 40, rng)
        sizes = part.sizes
        assert sizes.sum() == 100
        assert sizes.min() >= 1
        assert np.all(np.diff(sizes) <= 0)

    def test_m_above_n_rejected(self):
        rng = np.random.default_rng(4)
        data = generate_sample(5, SyntheticModel(0.6), rng)
        with pytest.raises(ValueError, match="nonempty"):
            partition_proportional(data, 6, rng)

    def test_union_preserves_data(self):
        rng = np.random.default_rng(11)
        data = generate_sample(83, SyntheticModel(0.6), rng)
        part = partition_proportional(data, 12, rng)
        original = np.column_stack([data.features, data.labels])
        rebuilt = np.column_stack([part.features, part.labels])
        key = lambda a: a[np.lexsort(a.T)]
        np.testing.assert_array_equal(key(original), key(rebuilt))


def test_shard_count():
    assert shard_count(20000, 0.0) == 1
    assert shard_count(20000, 0.5) == 142
    assert shard_count(10, 0.9) == math.ceil(10**0.9)


class TestExperimentConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            ExperimentConfig(N=1, kappa=0.6, epsilons=(0.0,))
        with pytest.raises(ValueError):
            ExperimentConfig(N=100, kappa=0.6, epsilons=(1.0,))
        with pytest.raises(ValueError):
            ExperimentConfig(N=100, kappa=0.6, epsilons=(0.0,), split="random")
        with pytest.raises(ValueError):
            ExperimentConfig(N=100, kappa=0.6, epsilons=(0.0,), runs=0)

    def test_classifier_names_accepted(self):
        cfg = ExperimentConfig(N=100, kappa=0.6, epsilons=(0.0,), classifiers=("dann", "D1NN"))
        assert cfg.classifiers == (ClassifierKind.DANN, ClassifierKind.D1NN)

    def test_round_trip_dict(self):
        cfg = ExperimentConfig(N=100, kappa=0.6, epsilons=(0.0, 0.5), runs=3, seed=9)
        d = cfg.to_dict()
        assert d["epsilons"] == [0.0, 0.5]
        assert d["classifiers"] == ["dann", "dann_nes", "dnn_qiao", "d1nn"]


class TestRunExperiment:
    def small_cfg(self, **kw):
        defaults = dict(
            N=400,
            kappa=0.60,
            epsilons=(0.0, 0.5),
            split="uniform",
            runs=12,
            seed=20260811,
            classifiers=(ClassifierKind.DANN, ClassifierKind.D1NN),
        )
        defaults.update(kw)
        return ExperimentConfig(**defaults)

    def test_single_degenerate_run(self):
        cfg = self.small_cfg(runs=1, epsilons=(0.0,), classifiers=(ClassifierKind.DANN,))
        res = run_experiment(cfg)
        assert len(res.rows) == 1
        assert res.rows[0].agreement_rate in (0.0, 1.0)
        assert res.rows[0].m == 1

    def test_rows_cover_grid_and_k1_summaries(self):
        res = run_experiment(self.small_cfg())
        assert len(res.rows) == 4
        dann_row = res.row(ClassifierKind.DANN, 0.0)
        assert dann_row.k1_min is not None and dann_row.k1_min >= 1
        assert dann_row.k1_max <= 400
        d1nn_row = res.row(ClassifierKind.D1NN, 0.0)
        assert d1nn_row.k1_min is None

    def test_seed_determinism_across_worker_counts(self):
        cfg = self.small_cfg()
        res1 = run_experiment(cfg, workers=1)
        res2 = run_experiment(cfg, workers=2)
        for r1, r2 in zip(res1.rows, res2.rows):
            assert r1.classifier == r2.classifier
            assert r1.agreement_rate == r2.agreement_rate
            assert r1.k1_med == r2.k1_med
        for key in res1.agreement_samples:
            np.testing.assert_array_equal(res1.agreement_samples[key], res2.agreement_samples[key])

    def test_different_seed_changes_samples(self):
        res1 = run_experiment(self.small_cfg())
        res2 = run_experiment(self.small_cfg(seed=1))
        diffs = [
            not np.array_equal(res1.agreement_samples[k], res2.agreement_samples[k])
            for k in res1.agreement_samples
        ]
        assert any(diffs)

    def test_csv_and_json_outputs(self, tmp_path):
        res = run_experiment(self.small_cfg(runs=3))
        csv_path = tmp_path / "rows.csv"
        json_path = tmp_path / "rows.json"
        res.write_csv(csv_path)
        res.write_json(json_path)
        lines = csv_path.read_text().strip().splitlines()
        assert lines[0].startswith("classifier,epsilon,m,")
        assert len(lines) == 1 + len(res.rows)
        blob = json.loads(json_path.read_text())
        assert blob["config"]["N"] == 400
        assert len(blob["rows"]) == len(res.rows)

    def test_queries_per_run_multiplies_samples(self):
        cfg = self.small_cfg(runs=4, queries_per_run=3, epsilons=(0.0,))
        res = run_experiment(cfg)
        assert res.agreement_samples[("dann", 0.0)].size == 12

    def test_bayes_constancy_above_half(self):
        # for kappa > 1/2 the oracle is constant 1, so the agreement rate is
        # exactly the positive-prediction rate; check the oracle side here
        rng = np.random.default_rng(0)
        model = SyntheticModel(0.55)
        pts = rng.random((2000, 3))
        assert np.all(eta_batch(pts, model) >= 0.55)
        assert all(bayes_classify(p, model) == 1 for p in pts[:100])
