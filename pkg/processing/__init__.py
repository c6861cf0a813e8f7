"""Report tables built from persisted sweep results."""

from importlib import import_module
from typing import TYPE_CHECKING

__all__ = [
    "process_reports",
    "report_delta_table",
    "report_setting_matrix",
    "render_table",
    "report_rank_table",
    "report_resolution_table",
    "median_deviation",
    "pairwise_comparisons",
]

if TYPE_CHECKING:  # for static type checkers only
    from processing.results_tables import (
        process_reports,
        render_table,
        report_delta_table,
        report_setting_matrix,
    )
    from processing.comparisons import (
        median_deviation,
        pairwise_comparisons,
        report_rank_table,
        report_resolution_table,
    )

_COMPARISONS = {"report_rank_table", "report_resolution_table", "median_deviation", "pairwise_comparisons"}


def __getattr__(name):
    """Lazily import processing modules to avoid side effects on package import."""

    if name in __all__:
        if name in _COMPARISONS:
            module = import_module("processing.comparisons")
            return getattr(module, name)
        module = import_module("processing.results_tables")
        return getattr(module, name)
    raise AttributeError(f"module 'processing' has no attribute {name}")
