"""Report tables over sweep results: multimodal gain per dataset and per-setting accuracy."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING
import sys

import numpy as np
import pandas as pd

# Ensure project root on path when executed as a script
project_root = Path(__file__).parent.parent
if __name__ == "__main__" and str(project_root) not in sys.path:
    sys.path.insert(0, str(project_root))

from src.config import CHART_TYPES, DATASET_CATALOG, AppConfig, task_type
from src.stats import mean_ci95

if TYPE_CHECKING:
    from processing.comparisons import ResolutionReport

logger = logging.getLogger(__name__)

SETTING_ORDER = ["Color-L", "Color-NL", "Mono-L", "Mono-NL"]
TASK_TYPES = ["Binary", "Multiclass", "All"]
GROUP_ORDER = ["Improving", "Almost Same", "Degrading", "Incomplete"]

CELL_COLUMNS = [
    "dataset", "architecture", "chart_types", "color_mode", "label_mode", "setting",
    "resolution", "backbone", "fusion", "numeric_encoder",
]


def _require_columns(df: pd.DataFrame, expected: set[str]) -> None:
    missing = sorted(c for c in expected if c not in df.columns)
    if missing:
        raise ValueError(f"Missing expected columns: {missing}")


def ok_runs(results: pd.DataFrame) -> pd.DataFrame:
    """Successful runs only."""
    _require_columns(results, set(CELL_COLUMNS) | {"status", "accuracy"})
    return results.loc[results["status"] == "ok"].copy()


def at_resolution(results: pd.DataFrame, resolution: int | None) -> pd.DataFrame:
    """Restrict to one resolution; with ``None`` the results must hold exactly one."""
    if resolution is not None:
        return results.loc[results["resolution"] == resolution]
    present = sorted(results["resolution"].dropna().unique())
    if len(present) > 1:
        raise ValueError(f"results span resolutions {present}; choose one")
    return results


def cell_means(results: pd.DataFrame) -> pd.DataFrame:
    """Mean test accuracy over seeds for every configuration cell."""
    ok = ok_runs(results)
    cells = (
        ok.groupby(CELL_COLUMNS, dropna=False, sort=True)
        .agg(accuracy=("accuracy", "mean"), runs=("accuracy", "size"))
        .reset_index()
    )
    return cells


def dataset_task_types(results: pd.DataFrame) -> dict[str, str]:
    """Binary/Multiclass per dataset from the recorded class count, else the catalog."""
    types = {}
    for dataset, group in results.groupby("dataset"):
        n_classes = group["n_classes"].dropna() if "n_classes" in group else pd.Series(dtype=float)
        if not n_classes.empty:
            types[dataset] = task_type(int(n_classes.iloc[0]))
        elif dataset in DATASET_CATALOG:
            types[dataset] = task_type(DATASET_CATALOG[dataset].n_classes)
    return types


def delta_group(delta: float, threshold: float = 0.03) -> str:
    if np.isnan(delta):
        return "Incomplete"
    if delta > threshold:
        return "Improving"
    if delta < -threshold:
        return "Degrading"
    return "Almost Same"


def report_delta_table(
    results: pd.DataFrame, threshold: float = 0.03, resolution: int | None = None
) -> pd.DataFrame:
    """Best single-chart accuracy against the multimodal accuracy, per dataset.

    The single-chart side is the best mean over every chart type and rendering
    setting; the multimodal side is the best mean over fusion strategies and
    numeric encoders. A dataset missing either side is kept with group
    "Incomplete" and no delta.
    """
    cells = cell_means(at_resolution(ok_runs(results), resolution))
    rows = []
    for dataset in sorted(cells["dataset"].unique()):
        mine = cells.loc[cells["dataset"] == dataset]
        single = mine.loc[mine["architecture"] == "single_chart"]
        multimodal = mine.loc[mine["architecture"] == "multimodal"]

        row = {
            "dataset": dataset,
            "best_chart_type": None,
            "best_setting": None,
            "single_acc": np.nan,
            "multimodal_acc": np.nan,
            "multimodal_config": None,
        }
        if not single.empty:
            best = single.loc[single["accuracy"].idxmax()]
            row.update(best_chart_type=best["chart_types"], best_setting=best["setting"], single_acc=best["accuracy"])
        if not multimodal.empty:
            best = multimodal.loc[multimodal["accuracy"].idxmax()]
            row.update(
                multimodal_acc=best["accuracy"],
                multimodal_config=f"{best['fusion']}/{best['numeric_encoder']}",
            )
        row["delta"] = row["multimodal_acc"] - row["single_acc"]
        row["group"] = delta_group(row["delta"], threshold)
        row["complete"] = row["group"] != "Incomplete"
        if not row["complete"]:
            logger.warning("Delta row for %s is incomplete", dataset)
        rows.append(row)

    columns = [
        "dataset", "best_chart_type", "best_setting", "single_acc", "multimodal_acc",
        "multimodal_config", "delta", "group", "complete",
    ]
    return pd.DataFrame(rows, columns=columns)


def delta_group_counts(table: pd.DataFrame) -> pd.Series:
    """Number of datasets per delta group, incomplete rows excluded."""
    complete = table.loc[table["complete"]]
    return complete["group"].value_counts().reindex(GROUP_ORDER[:3], fill_value=0)


@dataclass
class SettingMatrix:
    """Per chart type: dataset × rendering-setting accuracy, plus the task-type aggregate."""

    tables: dict[str, pd.DataFrame] = field(default_factory=dict)
    aggregate: pd.DataFrame = field(default_factory=pd.DataFrame)


def _mean_ci(values: np.ndarray) -> tuple[float, float]:
    if values.size == 0:
        return np.nan, np.nan
    if values.size == 1:
        return float(values[0]), np.nan
    return mean_ci95(values)


def report_setting_matrix(results: pd.DataFrame, resolution: int | None = None) -> SettingMatrix:
    """Single-chart accuracy under the four rendering settings.

    Each table has datasets as rows and settings as columns, with an
    ``Average`` row when it holds more than one dataset. The aggregate gives,
    for every chart type and setting, the mean and 95% CI half-width across
    datasets by task type.
    """
    cells = cell_means(at_resolution(ok_runs(results), resolution))
    single = cells.loc[cells["architecture"] == "single_chart"]
    task_types = dataset_task_types(results)

    tables: dict[str, pd.DataFrame] = {}
    aggregate_rows = []
    for chart_type in [c for c in CHART_TYPES if c in set(single["chart_types"])]:
        chart = single.loc[single["chart_types"] == chart_type]
        table = chart.pivot_table(index="dataset", columns="setting", values="accuracy", aggfunc="mean")
        table = table.reindex(columns=[s for s in SETTING_ORDER if s in table.columns])
        table.columns.name = None
        if len(table) > 1:
            table.loc["Average"] = table.mean(axis=0)
        tables[chart_type] = table

        for setting in table.columns:
            per_dataset = chart.loc[chart["setting"] == setting].groupby("dataset")["accuracy"].mean()
            for kind in TASK_TYPES:
                if kind == "All":
                    values = per_dataset.to_numpy()
                else:
                    values = per_dataset[[task_types.get(d) == kind for d in per_dataset.index]].to_numpy()
                if values.size == 0:
                    continue
                mean, ci = _mean_ci(values)
                aggregate_rows.append(
                    {
                        "chart_type": chart_type,
                        "setting": setting,
                        "task_type": kind,
                        "n_datasets": int(values.size),
                        "mean": mean,
                        "ci95": ci,
                    }
                )

    aggregate = pd.DataFrame(
        aggregate_rows, columns=["chart_type", "setting", "task_type", "n_datasets", "mean", "ci95"]
    )
    return SettingMatrix(tables=tables, aggregate=aggregate)


def render_table(frame: pd.DataFrame, fmt: str = "markdown", index: bool = True, floatfmt: str = ".4f") -> str:
    """CSV or Markdown text of a report table."""
    if fmt == "csv":
        return frame.to_csv(index=index, float_format=f"%{floatfmt}")
    if fmt == "markdown":
        return frame.to_markdown(index=index, floatfmt=floatfmt)
    raise ValueError(f"unknown report format {fmt!r}")


@dataclass
class ReportOutputs:
    """Container for the report tables of one results file."""

    delta: pd.DataFrame
    settings: SettingMatrix
    resolution: ResolutionReport | None = None
    ranks: pd.DataFrame | None = None
    written: list[Path] = field(default_factory=list)


def _write(frame: pd.DataFrame, stem: Path, index: bool) -> list[Path]:
    csv_path, md_path = stem.with_suffix(".csv"), stem.with_suffix(".md")
    csv_path.write_text(render_table(frame, "csv", index=index), encoding="utf-8")
    md_path.write_text(render_table(frame, "markdown", index=index) + "\n", encoding="utf-8")
    return [csv_path, md_path]


def process_reports(
    results_path: str | Path | None = None,
    output_dir: str | Path | None = None,
    config: AppConfig | None = None,
    resolution: int | None = None,
    write_output: bool = True,
) -> ReportOutputs:
    """Load a results file and build (and optionally write) every report table.

    Args:
        results_path: Optional results file; defaults to ``config.results_path``.
        output_dir: Where CSV and Markdown files go; defaults to a ``reports``
            directory next to the results file.
        config: Optional AppConfig instance (supplies the delta threshold).
        resolution: Resolution for the delta and setting tables when the
            results hold several.
        write_output: Whether to write the tables to ``output_dir``.
    """
    from processing.comparisons import report_rank_table, report_resolution_table
    from src.experiment_runner import load_results

    config = config or AppConfig()
    results_path = Path(results_path or config.results_path)
    if not results_path.exists():
        raise FileNotFoundError(f"Results not found at: {results_path}")

    results = load_results(results_path)
    resolutions = sorted(results["resolution"].dropna().unique())
    if resolution is None and len(resolutions) > 1:
        resolution = int(max(resolutions))

    outputs = ReportOutputs(
        delta=report_delta_table(results, threshold=config.delta_threshold, resolution=resolution),
        settings=report_setting_matrix(results, resolution=resolution),
    )
    if len(resolutions) > 1:
        outputs.resolution = report_resolution_table(results)
    outputs.ranks = report_rank_table(results)

    if write_output:
        out = Path(output_dir) if output_dir is not None else results_path.parent / "reports"
        out.mkdir(parents=True, exist_ok=True)
        outputs.written += _write(outputs.delta, out / "delta", index=False)
        for chart_type, table in outputs.settings.tables.items():
            outputs.written += _write(table, out / f"settings_{chart_type}", index=True)
        outputs.written += _write(outputs.settings.aggregate, out / "settings_aggregate", index=False)
        outputs.written += _write(outputs.ranks, out / "ranks", index=False)
        if outputs.resolution is not None:
            outputs.written += _write(outputs.resolution.table, out / "resolution", index=True)
            outputs.written += _write(outputs.resolution.comparisons, out / "resolution_tests", index=False)
        logger.info("Wrote %d report files to %s", len(outputs.written), out)

    return outputs


if __name__ == "__main__":
    process_reports()
