"""Tests for the vtbench command line."""

import pytest

from src.cli import (
    EXIT_CONFIG,
    EXIT_FAILED,
    EXIT_OK,
    build_parser,
    config_overrides,
    main,
)
from src.config import RunConfig
from src.selfcheck import run_selfcheck
from src.train_eval import Metrics, RunRecord, append_record, load_records

TINY_MODEL_FLAGS = [
    "--model.numeric_output_dim", "8",
    "--model.d_model", "8",
    "--model.heads", "2",
    "--model.common_dim", "8",
    "--model.head_hidden", "8",
]


def write_results(path):
    cells = [
        ("Beef", 0.6, {}),
        ("Beef", 0.8, {"architecture": "multimodal", "chart_types": ("line", "area", "bar", "scatter"),
                       "numeric_encoder": "oscnn"}),
        ("Wine", 0.7, {}),
        ("Wine", 0.65, {"architecture": "multimodal", "chart_types": ("line", "area", "bar", "scatter"),
                        "numeric_encoder": "fcn"}),
    ]
    for dataset, accuracy, extra in cells:
        run = RunConfig(dataset=dataset, **extra)
        append_record(
            path,
            RunRecord(
                run_id=run.run_id,
                config=run,
                seed=0,
                metrics=Metrics(accuracy=accuracy, macro_f1=accuracy),
                n_classes=2,
                length=100,
            ),
        )
    return path


class TestConfigFlags:
    """Tests for turning flags into config overrides."""

    def test_nested_and_list_flags(self):
        args = build_parser().parse_args(
            [
                "sweep",
                "--data-root", "/data/ucr",
                "--train.lr", "5e-4",
                "--sweep.resolutions", "64,128, 256",
                "--run.numeric_encoder", "none",
            ]
        )
        overrides = config_overrides(args)
        assert overrides["data_root"] == "/data/ucr"
        assert overrides["train"] == {"lr": "5e-4"}
        assert overrides["sweep"] == {"resolutions": ["64", "128", "256"]}
        assert overrides["run"] == {"numeric_encoder": None}

    def test_absent_flags_stay_out(self):
        args = build_parser().parse_args(["selfcheck"])
        assert config_overrides(args) == {}

    def test_invalid_value_exits_with_config_code(self, capsys):
        assert main(["selfcheck", "--train.lr", "fast"]) == EXIT_CONFIG
        assert "train.lr" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path, capsys):
        assert main(["selfcheck", "--config", str(tmp_path / "absent.toml")]) == EXIT_CONFIG
        assert "not found" in capsys.readouterr().err

    def test_flag_beats_config_file(self, tmp_path, capsys):
        config = tmp_path / "vtbench.toml"
        config.write_text('delta_threshold = 0.5\n', encoding="utf-8")
        results = write_results(tmp_path / "results.jsonl")
        argv = ["report", "delta", "--format", "csv", "--config", str(config), "--results-path", str(results)]

        assert main(argv) == EXIT_OK
        assert "Improving" not in capsys.readouterr().out
        assert main(argv + ["--delta-threshold", "0.03"]) == EXIT_OK
        assert "Improving" in capsys.readouterr().out


class TestSelfcheck:
    """Tests for the self-check command."""

    @pytest.mark.parametrize("suite", ["stats", "raster"])
    def test_suite_passes(self, suite, capsys):
        assert main(["selfcheck", "--suite", suite]) == EXIT_OK
        assert suite in capsys.readouterr().out

    def test_every_result_passes(self):
        results = run_selfcheck(["stats"])
        assert results
        assert all(r.passed for r in results), [r.name for r in results if not r.passed]

    def test_unknown_suite(self):
        with pytest.raises(ValueError):
            run_selfcheck(["lint"])


class TestReport:
    """Tests for report output."""

    def test_delta_markdown(self, tmp_path, capsys):
        results = write_results(tmp_path / "results.jsonl")
        assert main(["report", "delta", "--results-path", str(results)]) == EXIT_OK
        out = capsys.readouterr().out
        assert "Improving" in out
        assert "Degrading" in out
        assert "oscnn" in out

    def test_settings_csv_to_file(self, tmp_path):
        results = write_results(tmp_path / "results.jsonl")
        output = tmp_path / "out" / "settings.csv"
        argv = ["report", "settings", "--results-path", str(results), "--format", "csv", "--output", str(output)]

        assert main(argv) == EXIT_OK
        text = output.read_text(encoding="utf-8")
        assert "Mono-NL" in text
        assert "aggregate" in text

    def test_ranks_from_matrix(self, tmp_path, capsys, resolution_study):
        matrix, _ = resolution_study
        path = tmp_path / "matrix.csv"
        matrix.to_csv(path)

        assert main(["report", "ranks", "--matrix", str(path), "--group-by", "length_group"]) == EXIT_OK
        assert "Long (>400)" in capsys.readouterr().out

    def test_stats_from_matrix(self, tmp_path, capsys, resolution_study):
        matrix, _ = resolution_study
        path = tmp_path / "matrix.csv"
        matrix.to_csv(path)

        assert main(["report", "stats", "--matrix", str(path), "--format", "csv"]) == EXIT_OK
        assert "128 vs 64" in capsys.readouterr().out

    def test_delta_rejects_matrix(self, tmp_path, resolution_study):
        matrix, _ = resolution_study
        path = tmp_path / "matrix.csv"
        matrix.to_csv(path)
        assert main(["report", "delta", "--matrix", str(path)]) == EXIT_CONFIG

    def test_missing_results(self, tmp_path):
        assert main(["report", "delta", "--results-path", str(tmp_path / "none.jsonl")]) == EXIT_FAILED


class TestTrainCommand:
    """Tests for training one cell from the command line."""

    def test_train_appends_record(self, ucr_root, tmp_path, capsys):
        results = tmp_path / "results.jsonl"
        argv = [
            "train",
            "--data-root", str(ucr_root),
            "--cache-dir", str(tmp_path / "charts"),
            "--results-path", str(results),
            "--run.dataset", "SyntheticShape",
            "--run.resolution", "16",
            "--run.backbone", "shallow",
            "--train.max_epochs", "2",
            *TINY_MODEL_FLAGS,
        ]

        assert main(argv) == EXIT_OK
        assert "accuracy" in capsys.readouterr().out
        records = load_records(results)
        assert len(records) == 1
        assert records[0].config.dataset == "SyntheticShape"

    def test_train_needs_data_root(self, tmp_path):
        argv = ["train", "--results-path", str(tmp_path / "r.jsonl"), "--run.dataset", "Beef"]
        assert main(argv) == EXIT_CONFIG

    def test_sweep_needs_sweep_section(self, tmp_path):
        assert main(["sweep", "--results-path", str(tmp_path / "r.jsonl")]) == EXIT_CONFIG
