"""Tests for the report tables built from sweep results."""

import numpy as np
import pandas as pd
import pytest

from processing.comparisons import (
    accuracy_matrix,
    deviation_summary,
    matrix_groups,
    median_deviation,
    method_summary,
    pairwise_comparisons,
    rank_table,
    read_matrix,
    report_rank_table,
    report_resolution_table,
    resolution_analysis,
)
from processing.results_tables import (
    SETTING_ORDER,
    at_resolution,
    delta_group,
    delta_group_counts,
    process_reports,
    render_table,
    report_delta_table,
    report_setting_matrix,
)
from src.config import AppConfig, RunConfig
from src.experiment_runner import records_frame
from src.train_eval import Metrics, RunRecord, append_record

MULTIMODAL = ("line", "area", "bar", "scatter")


def record(dataset, accuracy, seed=0, n_classes=2, status="ok", **config):
    if config.get("architecture") == "multimodal":
        config.setdefault("chart_types", MULTIMODAL)
        config.setdefault("numeric_encoder", "oscnn")
    run = RunConfig(dataset=dataset, seed=seed, **config)
    metrics = Metrics(accuracy=accuracy, macro_f1=accuracy) if status == "ok" else None
    return RunRecord(
        run_id=run.run_id,
        config=run,
        seed=seed,
        status=status,
        metrics=metrics,
        n_classes=n_classes,
        length=100,
        n_train=50,
    )


@pytest.fixture
def delta_results():
    records = [
        record("Beef", 0.570, seed=0, n_classes=5),
        record("Beef", 0.606, seed=1, n_classes=5),
        record("Beef", 0.500, chart_types=("bar",), color_mode="color", label_mode="with_label", n_classes=5),
        record("Beef", 0.867, architecture="multimodal", fusion="weighted", n_classes=5),
        record("Beef", 0.800, architecture="multimodal", numeric_encoder="transformer", n_classes=5),
        record("Beef", 0.990, architecture="multimodal", fusion="weighted", numeric_encoder="fcn",
               n_classes=5, status="failed"),
        record("Wine", 0.700),
        record("Wine", 0.710, architecture="multimodal"),
        record("Ham", 0.700),
        record("Ham", 0.600, architecture="multimodal"),
        record("Herring", 0.650),
    ]
    return records_frame(records)


@pytest.fixture
def setting_results():
    records = []
    settings = [("color", "with_label"), ("color", "no_label"), ("mono", "with_label"), ("mono", "no_label")]
    for dataset, n_classes, base in (("Wine", 2, 0.60), ("Ham", 2, 0.70), ("Beef", 5, 0.50)):
        for offset, (color, label) in enumerate(settings):
            for chart_type in ("line", "bar"):
                records.append(
                    record(
                        dataset,
                        base + 0.01 * offset,
                        n_classes=n_classes,
                        chart_types=(chart_type,),
                        color_mode=color,
                        label_mode=label,
                    )
                )
    return records_frame(records)


def resolution_results(study, datasets=("Crop", "Wafer", "Beef", "Herring", "Wine")):
    matrix, lengths = study
    records = []
    for dataset in datasets:
        for resolution in (64, 128, 256):
            rec = record(dataset, float(matrix.loc[dataset, resolution]), resolution=resolution, backbone="shallow")
            records.append(rec.model_copy(update={"length": lengths[dataset]}))
    return records_frame(records)


class TestDeltaTable:
    """Tests for the best-single versus multimodal table."""

    def test_beef_gain(self, delta_results):
        table = report_delta_table(delta_results).set_index("dataset")
        beef = table.loc["Beef"]
        assert beef["best_chart_type"] == "line"
        assert beef["best_setting"] == "Mono-NL"
        assert beef["single_acc"] == pytest.approx(0.588)
        assert beef["multimodal_acc"] == pytest.approx(0.867)
        assert beef["multimodal_config"] == "weighted/oscnn"
        assert beef["delta"] == pytest.approx(0.279)
        assert beef["group"] == "Improving"

    def test_groups(self, delta_results):
        table = report_delta_table(delta_results).set_index("dataset")
        assert table.loc["Wine", "group"] == "Almost Same"
        assert table.loc["Ham", "group"] == "Degrading"
        assert table.loc["Herring", "group"] == "Incomplete"
        assert not table.loc["Herring", "complete"]
        assert np.isnan(table.loc["Herring", "delta"])

    def test_group_counts_skip_incomplete(self, delta_results):
        counts = delta_group_counts(report_delta_table(delta_results))
        assert counts.to_dict() == {"Improving": 1, "Almost Same": 1, "Degrading": 1}

    def test_threshold(self, delta_results):
        table = report_delta_table(delta_results, threshold=0.005).set_index("dataset")
        assert table.loc["Wine", "group"] == "Improving"

    @pytest.mark.parametrize(
        "delta,group",
        [(0.05, "Improving"), (0.03, "Almost Same"), (-0.03, "Almost Same"), (-0.031, "Degrading"), (np.nan, "Incomplete")],
    )
    def test_delta_group(self, delta, group):
        assert delta_group(delta, 0.03) == group

    def test_missing_columns(self):
        with pytest.raises(ValueError, match="Missing expected columns"):
            report_delta_table(pd.DataFrame({"dataset": ["Beef"]}))


class TestResolutionFilter:
    """Tests for picking one resolution out of mixed results."""

    def test_mixed_resolutions_need_choice(self, resolution_study):
        results = resolution_results(resolution_study)
        with pytest.raises(ValueError):
            at_resolution(results, None)
        assert set(at_resolution(results, 64)["resolution"]) == {64}

    def test_delta_at_resolution(self, resolution_study):
        results = resolution_results(resolution_study)
        table = report_delta_table(results, resolution=128).set_index("dataset")
        assert table.loc["Beef", "single_acc"] == pytest.approx(0.5888)


class TestSettingMatrix:
    """Tests for the per-chart setting tables and their aggregate."""

    def test_tables(self, setting_results):
        matrix = report_setting_matrix(setting_results)
        assert set(matrix.tables) == {"line", "bar"}
        line = matrix.tables["line"]
        assert list(line.columns) == SETTING_ORDER
        assert line.index.tolist() == ["Beef", "Ham", "Wine", "Average"]
        assert line.loc["Wine", "Mono-NL"] == pytest.approx(0.63)
        assert line.loc["Average", "Color-L"] == pytest.approx(0.60)

    def test_aggregate_by_task_type(self, setting_results):
        aggregate = report_setting_matrix(setting_results).aggregate
        line = aggregate.loc[(aggregate["chart_type"] == "line") & (aggregate["setting"] == "Color-L")]
        rows = line.set_index("task_type")
        assert rows.loc["Binary", "n_datasets"] == 2
        assert rows.loc["Binary", "mean"] == pytest.approx(0.65)
        assert np.isnan(rows.loc["Multiclass", "ci95"])
        assert rows.loc["All", "n_datasets"] == 3
        assert rows.loc["All", "ci95"] > 0

    def test_single_dataset_has_no_average(self, setting_results):
        wine = setting_results.loc[setting_results["dataset"] == "Wine"]
        assert "Average" not in report_setting_matrix(wine).tables["line"].index


class TestRenderTable:
    """Tests for CSV and Markdown output."""

    def test_formats(self):
        frame = pd.DataFrame({"dataset": ["Beef"], "delta": [0.27912]})
        assert "0.2791" in render_table(frame, "markdown", index=False)
        assert render_table(frame, "csv", index=False).splitlines()[0] == "dataset,delta"
        with pytest.raises(ValueError):
            render_table(frame, "latex")


class TestComparisons:
    """Tests for cross-dataset comparisons."""

    def test_pairwise_resolution_tests(self, resolution_study):
        matrix, _ = resolution_study
        table = pairwise_comparisons(matrix).set_index("comparison")
        assert table.index.tolist() == ["128 vs 64", "256 vs 64", "256 vs 128"]
        assert table.loc["128 vs 64", "significant"]
        assert not table.loc["256 vs 64", "significant"]
        assert (table["n"] == 31).all()

    def test_resolution_analysis(self, resolution_study):
        matrix, lengths = resolution_study
        report = resolution_analysis(matrix[[256, 64, 128]], lengths)
        assert list(report.table.columns) == [64, 128, 256]
        assert report.table.index.tolist() == ["Short (<200)", "Medium (200-400)", "Long (>400)", "Overall"]
        np.testing.assert_allclose(report.table.loc["Overall"].to_numpy(), matrix.mean(axis=0).to_numpy())
        assert report.overall["n_datasets"].tolist() == [31, 31, 31]

    def test_resolution_analysis_needs_lengths(self, resolution_study):
        matrix, lengths = resolution_study
        with pytest.raises(ValueError):
            resolution_analysis(matrix, {k: v for k, v in lengths.items() if k != "Beef"})

    def test_report_resolution_table(self, resolution_study):
        report = report_resolution_table(resolution_results(resolution_study))
        assert report.matrix.shape == (5, 3)
        assert report.matrix.loc["Beef", 256] == pytest.approx(0.5444)
        assert len(report.comparisons) == 3

    def test_resolution_table_needs_two(self, delta_results):
        with pytest.raises(ValueError):
            report_resolution_table(delta_results)

    def test_accuracy_matrix_labels(self, resolution_study):
        matrix = accuracy_matrix(resolution_results(resolution_study))
        assert set(matrix.columns) == {"64", "128", "256"}

    def test_rank_table_groups(self, resolution_study):
        matrix, _ = resolution_study
        groups = matrix_groups(matrix.index, "length_group")
        table = rank_table(matrix, groups)
        assert set(table["group"]) == {"Short (<200)", "Medium (200-400)", "Long (>400)"}
        for _, group in table.groupby("group"):
            assert group["avg_rank"].sum() == pytest.approx(6.0)

    def test_report_rank_table_by_task_type(self, setting_results):
        table = report_rank_table(setting_results, group_by="task_type")
        assert set(table["group"]) == {"Binary", "Multiclass"}
        assert {"group", "method", "avg_rank", "wins", "n_datasets"} <= set(table.columns)

    def test_median_deviation(self):
        matrix = pd.DataFrame({"a": [0.9, 0.5], "b": [0.8, 0.6], "c": [0.7, 0.7]}, index=["d1", "d2"])
        deviation = median_deviation(matrix)
        np.testing.assert_allclose(deviation["b"], [0.0, 0.0], atol=1e-12)
        np.testing.assert_allclose(deviation["a"], [0.1, -0.1])
        summary = deviation_summary(deviation)
        assert summary.loc["c", "above_median"] == 1
        assert summary.index.name == "method"

    def test_method_summary_single_dataset(self):
        summary = method_summary(pd.DataFrame({"a": [0.5]}, index=["d1"]))
        assert summary.loc[0, "mean"] == 0.5
        assert np.isnan(summary.loc[0, "ci95"])

    def test_read_matrix(self, tmp_path, resolution_study):
        matrix, _ = resolution_study
        path = tmp_path / "matrix.csv"
        matrix.to_csv(path)
        loaded = read_matrix(path)
        assert loaded.shape == (31, 3)
        assert loaded.loc["Beef", "128"] == pytest.approx(0.5888)


class TestProcessReports:
    """Tests for writing every report from a results file."""

    def write_results(self, path, records):
        for rec in records:
            append_record(path, rec)
        return path

    def test_writes_tables(self, tmp_path):
        path = self.write_results(
            tmp_path / "results.jsonl",
            [
                record("Beef", 0.6, n_classes=5),
                record("Beef", 0.8, architecture="multimodal", n_classes=5),
                record("Wine", 0.7),
                record("Wine", 0.72, architecture="multimodal"),
            ],
        )
        outputs = process_reports(path, output_dir=tmp_path / "reports", config=AppConfig())

        names = {p.name for p in outputs.written}
        assert {"delta.csv", "delta.md", "settings_line.csv", "settings_aggregate.md", "ranks.csv"} <= names
        assert outputs.resolution is None
        assert outputs.delta.set_index("dataset").loc["Beef", "group"] == "Improving"

    def test_multiple_resolutions(self, tmp_path, resolution_study):
        frame_records = []
        matrix, lengths = resolution_study
        for dataset in ("Crop", "Beef", "Wine"):
            for resolution in (64, 128):
                rec = record(dataset, float(matrix.loc[dataset, resolution]), resolution=resolution)
                frame_records.append(rec.model_copy(update={"length": lengths[dataset]}))
        path = self.write_results(tmp_path / "results.jsonl", frame_records)

        outputs = process_reports(path, config=AppConfig())

        assert outputs.resolution is not None
        assert (tmp_path / "reports" / "resolution.md").exists()
        assert outputs.delta.set_index("dataset").loc["Beef", "single_acc"] == pytest.approx(0.5888)

    def test_missing_results(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            process_reports(tmp_path / "absent.jsonl", config=AppConfig(), write_output=False)
