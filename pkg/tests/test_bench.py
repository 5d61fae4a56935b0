import json

import numpy as np
import pytest

from progsearch.bench import (
    BenchConfig,
    coverage,
    exact_class_ratio,
    exact_ratio,
    rmse,
    run_bench,
    time_savings,
)
from progsearch.dataset import generate_cbf, generate_random_walk
from progsearch.stopping import QueryOutcome


class TestMeasures:
    def test_coverage_half(self):
        assert coverage([(0, 2), (0, 1)], (1, 1.5)) == 0.5

    def test_coverage_all_encompassing(self):
        assert coverage([(-np.inf, np.inf)] * 3, (1, 2, 3)) == 1.0

    def test_coverage_closed_at_zero_width(self):
        assert coverage([(2.0, 2.0)], (2.0,)) == 1.0

    def test_coverage_misaligned(self):
        with pytest.raises(ValueError):
            coverage([(0, 1)], (1, 2))

    def test_rmse_identity(self):
        assert rmse([1, 2, 3], [1, 2, 3]) == 0.0

    def test_rmse_hand_value(self):
        assert rmse((0, 0), (3, 4)) == pytest.approx(np.sqrt(12.5))

    def test_rmse_pair_permutation_invariant(self):
        a = rmse((1, 5, 2), (0, 4, 4))
        b = rmse((5, 2, 1), (4, 4, 0))
        assert a == pytest.approx(b)

    def test_rmse_empty(self):
        with pytest.raises(ValueError):
            rmse([], [])

    def test_time_savings_hand_value(self):
        assert time_savings([100], [400]) == 0.75

    def test_time_savings_never_stopped(self):
        assert time_savings([7, 9], [7, 9]) == 0.0

    def test_time_savings_boundary(self):
        assert time_savings([1], [1]) == 0.0

    def test_time_savings_validation(self):
        with pytest.raises(ValueError):
            time_savings([2], [1])
        with pytest.raises(ValueError):
            time_savings([0], [0])

    def _outcome(self, exact, exact_class=None):
        out = QueryOutcome(ids=np.array([0]), distances=np.array([1.0]),
                           stopped_at_leaves=None, total_leaves_without_stop=4)
        out.was_exact = np.array([exact])
        out.was_exact_class = exact_class
        return out

    def test_exact_ratio(self):
        outs = [self._outcome(True)] * 19 + [self._outcome(False)]
        assert exact_ratio(outs) == 0.95

    def test_class_dominates_answer(self):
        outs = ([self._outcome(True, True)] * 6
                + [self._outcome(False, True)] * 2
                + [self._outcome(False, False)] * 2)
        assert exact_class_ratio(outs) >= exact_ratio(outs)


@pytest.fixture(scope="module")
def smoke_report(tmp_path_factory):
    workdir = tmp_path_factory.mktemp("bench")
    descriptor_path = workdir / "walk"
    generate_random_walk(2500, 32, seed=17, path=descriptor_path)
    config = BenchConfig(
        dataset=str(descriptor_path.with_suffix(".json")),
        index_kind="dstree", leaf_threshold=50, k=1,
        n_w=40, n_r=30, n_t=20, repetitions=2,
        witness_pool=120, query_pool=220,
        checkpoints=(1, 2, 4, 8, 16),
        policies=("none", "prob:0.05", "time:0.05", "error:0.05:0.05"),
        moment_count=8, seed=9,
    )
    return config, run_bench(config)


class TestRunBench:
    def test_accounting(self, smoke_report):
        config, report = smoke_report
        assert report.measurements_per_cell == config.repetitions * config.n_t
        cell = report.estimators["witness"]["0"]["0.05"]
        assert cell["count"] == config.repetitions * config.n_t
        for policy in config.policies:
            assert report.policies[policy]["count"] == config.repetitions * config.n_t
            assert len(report.policies[policy]["per_rep"]) == config.repetitions

    def test_none_policy_rows(self, smoke_report):
        _, report = smoke_report
        none_row = report.policies["none"]
        assert none_row["exact_ratio"] == 1.0
        assert none_row["savings_leaves"] == 0.0

    def test_policies_save_leaves(self, smoke_report):
        _, report = smoke_report
        assert report.policies["prob:0.05"]["savings_leaves"] > 0.0

    def test_estimator_cells_have_metrics(self, smoke_report):
        _, report = smoke_report
        for method in ("linear", "kde2", "kde3"):
            pooled = report.estimators[method]["pooled"]["0.05"]
            assert 0.0 <= pooled["coverage"] <= 1.0
            assert pooled["mean_width"] >= 0.0
            assert pooled["rmse"] >= 0.0

    def test_report_determinism(self, smoke_report):
        config, report = smoke_report
        again = run_bench(config)
        assert report.to_json() == again.to_json()

    def test_csv_shape(self, smoke_report):
        _, report = smoke_report
        rows = report.csv_rows()
        assert rows[0] == ["section", "name", "checkpoint", "level", "metric", "value"]
        assert len(rows) > 20

    def test_json_round_trip_structure(self, smoke_report):
        _, report = smoke_report
        doc = json.loads(report.to_json())
        assert set(doc) == {"config", "estimators", "policies", "classification",
                            "repetitions", "measurements_per_cell"}


class TestTinyAccounting:
    def test_single_repetition_five_queries(self, tmp_path):
        generate_random_walk(800, 32, seed=29, path=tmp_path / "tiny")
        config = BenchConfig(
            dataset=str(tmp_path / "tiny.json"), index_kind="isax",
            segment_count=8, leaf_threshold=40, k=1,
            n_w=15, n_r=20, n_t=5, repetitions=1,
            witness_pool=40, query_pool=80,
            checkpoints=(1, 2, 4), estimators=("baseline", "kde2"),
            policies=("none",), moment_count=4, seed=13,
        )
        report = run_bench(config)
        assert report.measurements_per_cell == 5
        assert report.estimators["baseline"]["0"]["0.05"]["count"] == 5
        assert report.policies["none"]["count"] == 5


class TestLabeledBench:
    def test_classification_metrics_present(self, tmp_path):
        generate_cbf(2500, 64, 3.0, (1 / 3, 1 / 3, 1 / 3), seed=19,
                     path=tmp_path / "cbf")
        config = BenchConfig(
            dataset=str(tmp_path / "cbf.json"),
            index_kind="dstree", leaf_threshold=50, k=5,
            n_w=30, n_r=30, n_t=20, repetitions=2,
            witness_pool=100, query_pool=200,
            checkpoints=(1, 2, 4, 8, 16),
            estimators=("linear", "kde2"),
            policies=("none", "prob:0.05", "class:0.05"),
            moment_count=8, seed=3,
        )
        report = run_bench(config)
        row = report.policies["class:0.05"]
        assert "exact_class_ratio" in row
        assert "accuracy_ratio" in row
        assert row["exact_class_ratio"] >= row["exact_ratio"]
        none_row = report.policies["none"]
        assert none_row["exact_class_ratio"] == 1.0
        # dominance in every audited policy row
        for policy_row in report.policies.values():
            if "exact_class_ratio" in policy_row:
                assert policy_row["exact_class_ratio"] >= policy_row["exact_ratio"]


class TestFigures:
    def test_figures_render(self, smoke_report, tmp_path):
        from progsearch.plots import render_report_figures

        _, report = smoke_report
        written = render_report_figures(report, tmp_path / "figs")
        assert [p.name for p in written] == ["coverage.png", "interval_width.png",
                                             "policies.png"]
        for p in written:
            assert p.stat().st_size > 1000
