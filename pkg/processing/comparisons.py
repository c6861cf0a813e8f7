"""Cross-dataset comparisons: resolution study, average ranks and deviation from the median."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from itertools import combinations
from typing import Literal

import numpy as np
import pandas as pd

from processing.results_tables import cell_means, ok_runs
from src.config import DATASET_CATALOG, length_group, task_type, train_size_group
from src.stats import StatsError, avg_rank_table, compare_paired, mean_ci95

logger = logging.getLogger(__name__)

GroupBy = Literal["task_type", "train_size", "length_group", "data_type"]
LENGTH_GROUPS = ["Short (<200)", "Medium (200-400)", "Long (>400)"]

METHOD_COLUMNS = ["architecture", "chart_types", "setting", "resolution", "backbone", "fusion", "numeric_encoder"]


def method_label(row: pd.Series, columns: list[str]) -> str:
    return "/".join(str(row[c]) for c in columns if pd.notna(row[c]))


def accuracy_matrix(
    results: pd.DataFrame,
    method_columns: list[str] | None = None,
    architecture: str | None = None,
) -> pd.DataFrame:
    """Dataset × method matrix of mean accuracy over seeds.

    Methods are labelled by joining the values of ``method_columns`` that vary
    across the results, so a matrix over a single-axis sweep reads e.g. ``64``,
    ``128``, ``256``.
    """
    cells = cell_means(results)
    if architecture is not None:
        cells = cells.loc[cells["architecture"] == architecture]
    if cells.empty:
        raise ValueError("no successful runs to tabulate")
    columns = method_columns or [c for c in METHOD_COLUMNS if cells[c].nunique(dropna=False) > 1]
    if not columns:
        columns = ["architecture"]
    cells = cells.assign(method=cells.apply(method_label, axis=1, columns=columns))
    matrix = cells.pivot_table(index="dataset", columns="method", values="accuracy", aggfunc="max")
    matrix.columns.name = None
    return matrix


def pairwise_comparisons(matrix: pd.DataFrame, alpha: float = 0.05) -> pd.DataFrame:
    """Wilcoxon p and Cliff's delta for every pair of methods, later column against earlier.

    Each pair uses the datasets where both methods have a value.
    """
    rows = []
    for first, second in combinations(matrix.columns, 2):
        pair = matrix[[first, second]].dropna()
        if pair.empty:
            logger.warning("No common datasets for %s vs %s", second, first)
            continue
        result = compare_paired(pair[second], pair[first], label=f"{second} vs {first}", alpha=alpha)
        rows.append(
            {
                "comparison": result.label,
                "n": len(pair),
                "p_value": result.p_value,
                "significant": result.significant,
                "cliffs_delta": result.delta,
                "magnitude": result.magnitude,
                "test": result.method,
            }
        )
    return pd.DataFrame(
        rows, columns=["comparison", "n", "p_value", "significant", "cliffs_delta", "magnitude", "test"]
    )


def method_summary(matrix: pd.DataFrame) -> pd.DataFrame:
    """Per-method mean accuracy with the 95% CI half-width across datasets."""
    rows = []
    for method in matrix.columns:
        values = matrix[method].dropna().to_numpy()
        try:
            mean, ci = mean_ci95(values)
        except StatsError:
            mean, ci = (float(values.mean()) if values.size else np.nan), np.nan
        rows.append({"method": method, "n_datasets": int(values.size), "mean": mean, "ci95": ci})
    return pd.DataFrame(rows, columns=["method", "n_datasets", "mean", "ci95"])


@dataclass
class ResolutionReport:
    """Accuracy per length group and resolution, with overall CIs and paired tests."""

    table: pd.DataFrame
    overall: pd.DataFrame
    comparisons: pd.DataFrame
    matrix: pd.DataFrame


def resolution_analysis(matrix: pd.DataFrame, lengths: dict[str, int]) -> ResolutionReport:
    """Resolution study over a dataset × resolution accuracy matrix.

    Args:
        matrix: Rows are datasets, columns are resolutions in ascending order.
        lengths: Series length per dataset, for the length grouping.
    """
    matrix = matrix.reindex(columns=sorted(matrix.columns, key=int))
    groups = pd.Series({d: length_group(lengths[d]) for d in matrix.index if d in lengths})
    missing = sorted(set(matrix.index) - set(groups.index))
    if missing:
        raise ValueError(f"Missing series lengths for: {missing}")

    table = matrix.groupby(groups).mean()
    table = table.reindex([g for g in LENGTH_GROUPS if g in table.index])
    table.loc["Overall"] = matrix.mean(axis=0)
    table.index.name = "length_group"
    return ResolutionReport(
        table=table,
        overall=method_summary(matrix),
        comparisons=pairwise_comparisons(matrix),
        matrix=matrix,
    )


def _dataset_facts(results: pd.DataFrame) -> pd.DataFrame:
    """Length, class count, train size and data type per dataset (recorded first, catalog second)."""
    rows = {}
    for dataset, group in results.groupby("dataset"):
        info = DATASET_CATALOG.get(dataset)
        facts = {
            "length": info.length if info else np.nan,
            "n_classes": info.n_classes if info else np.nan,
            "n_train": info.n_train if info else np.nan,
            "data_type": info.data_type if info else "Unknown",
        }
        for column in ("length", "n_classes", "n_train"):
            if column in group and group[column].notna().any():
                facts[column] = int(group[column].dropna().iloc[0])
        rows[dataset] = facts
    return pd.DataFrame.from_dict(rows, orient="index")


def report_resolution_table(results: pd.DataFrame, architecture: str = "single_chart") -> ResolutionReport:
    """Resolution study over a results table.

    Each dataset's accuracy at a resolution is its best cell mean there.
    """
    cells = cell_means(results)
    cells = cells.loc[cells["architecture"] == architecture]
    matrix = cells.pivot_table(index="dataset", columns="resolution", values="accuracy", aggfunc="max")
    if matrix.shape[1] < 2:
        raise ValueError(f"resolution study needs at least two resolutions, found {list(matrix.columns)}")
    matrix.columns.name = None
    facts = _dataset_facts(ok_runs(results))
    lengths = {d: int(v) for d, v in facts["length"].dropna().items()}
    return resolution_analysis(matrix, lengths)


def _group_labels(facts: pd.DataFrame, group_by: GroupBy) -> pd.Series:
    match group_by:
        case "task_type":
            return facts["n_classes"].map(lambda n: task_type(int(n)) if pd.notna(n) else "Unknown")
        case "train_size":
            return facts["n_train"].map(lambda n: train_size_group(int(n)) if pd.notna(n) else "Unknown")
        case "length_group":
            return facts["length"].map(lambda n: length_group(int(n)) if pd.notna(n) else "Unknown")
        case "data_type":
            return facts["data_type"]
    raise ValueError(f"unknown grouping {group_by!r}")


def rank_table(matrix: pd.DataFrame, groups: pd.Series | None = None) -> pd.DataFrame:
    """Average rank and wins per method, optionally within each dataset group."""
    labelled = groups if groups is not None else pd.Series("All", index=matrix.index)
    frames = []
    for group in sorted(labelled.dropna().unique()):
        subset = matrix.loc[labelled.index[labelled == group].intersection(matrix.index)]
        if subset.empty:
            continue
        ranked = avg_rank_table(subset)
        frame = ranked.table.reset_index()
        frame.insert(0, "group", group)
        frame["n_datasets"] = len(subset) - len(ranked.excluded)
        frames.append(frame)
    return pd.concat(frames, ignore_index=True)


def report_rank_table(
    results: pd.DataFrame,
    group_by: GroupBy | None = None,
    method_columns: list[str] | None = None,
) -> pd.DataFrame:
    """Average rank (1 = best) and first-place wins of every configuration."""
    matrix = accuracy_matrix(results, method_columns)
    groups = None
    if group_by is not None:
        groups = _group_labels(_dataset_facts(ok_runs(results)), group_by)
    return rank_table(matrix, groups)


def matrix_groups(datasets: pd.Index, group_by: GroupBy) -> pd.Series:
    """Group labels for a user-supplied matrix, from the dataset catalog."""
    facts = pd.DataFrame(
        {
            "length": [DATASET_CATALOG[d].length if d in DATASET_CATALOG else np.nan for d in datasets],
            "n_classes": [DATASET_CATALOG[d].n_classes if d in DATASET_CATALOG else np.nan for d in datasets],
            "n_train": [DATASET_CATALOG[d].n_train if d in DATASET_CATALOG else np.nan for d in datasets],
            "data_type": [DATASET_CATALOG[d].data_type if d in DATASET_CATALOG else "Unknown" for d in datasets],
        },
        index=datasets,
    )
    return _group_labels(facts, group_by)


def median_deviation(matrix: pd.DataFrame) -> pd.DataFrame:
    """Each method's accuracy minus the dataset-wise median over all methods."""
    return matrix.sub(matrix.median(axis=1, skipna=True), axis=0)


def deviation_summary(deviation: pd.DataFrame) -> pd.DataFrame:
    summary = deviation.agg(["mean", "median", "std", "min", "max"]).T
    summary.index.name = "method"
    summary["above_median"] = (deviation > 0).sum(axis=0)
    return summary.sort_values("median", ascending=False)


def read_matrix(path) -> pd.DataFrame:
    """Dataset × method accuracy CSV: first column is the dataset name."""
    matrix = pd.read_csv(path, index_col=0)
    if matrix.shape[1] < 1:
        raise ValueError(f"Matrix at {path} has no method columns")
    matrix = matrix.apply(pd.to_numeric, errors="coerce")
    matrix.index = matrix.index.astype(str)
    return matrix

