"""Command-line surface: render, train, sweep, report and selfcheck.

Every AppConfig key has a flag. Top-level keys are spelled with dashes
(``--data-root``), nested keys with their section (``--train.lr 5e-4``,
``--sweep.resolutions 64,128,256``). Flags override the environment
(``VTB_*``), which overrides the ``--config`` TOML file.
"""

from __future__ import annotations

import argparse
import logging
import sys
from functools import partial
from pathlib import Path
from typing import Sequence, get_args, get_origin

import pandas as pd
from pydantic import BaseModel, ValidationError

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
)
from processing.results_tables import (
    delta_group_counts,
    render_table,
    report_delta_table,
    report_setting_matrix,
)
from src.config import AppConfig, ModelConfig, RunConfig, SweepConfig, TrainConfig, load_app_config
from src.experiment_runner import (
    CompletionReport,
    execute,
    expand_grid,
    load_from_root,
    load_results,
    prerender,
    safe_run,
)
from src.selfcheck import SUITES, run_selfcheck
from src.train_eval import RunRecord, append_record

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(name)s - %(message)s"

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2

SECTIONS: dict[str, type[BaseModel]] = {
    "run": RunConfig,
    "sweep": SweepConfig,
    "train": TrainConfig,
    "model": ModelConfig,
}
TOP_LEVEL_KEYS = [
    "data_root", "cache_dir", "results_path", "checkpoint_dir", "save_checkpoints",
    "val_fraction", "split_seed", "delta_threshold", "workers", "log_level",
]
REPORT_KINDS = ["delta", "settings", "ranks", "stats", "deviation"]


class CommandError(RuntimeError):
    """A command cannot run with the given configuration."""


# ---- parsing ------------------------------------------------------------------------


def _is_sequence(annotation) -> bool:
    if get_origin(annotation) in (list, tuple):
        return True
    return any(get_origin(arg) in (list, tuple) for arg in get_args(annotation))


def _flag_value(raw: str, sequence: bool):
    if raw.lower() in ("none", "null"):
        return None
    if sequence:
        return [item.strip() for item in raw.split(",") if item.strip()]
    return raw


def _config_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML file with the AppConfig key schema")
    for key in TOP_LEVEL_KEYS:
        common.add_argument(f"--{key.replace('_', '-')}", dest=key, default=argparse.SUPPRESS)
    for section, model in SECTIONS.items():
        group = common.add_argument_group(f"{section} settings")
        for name, info in model.model_fields.items():
            group.add_argument(
                f"--{section}.{name}",
                dest=f"{section}__{name}",
                default=argparse.SUPPRESS,
                metavar="LIST" if _is_sequence(info.annotation) else "VALUE",
            )
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _config_flags()
    parser = argparse.ArgumentParser(prog="vtbench", description="Chart-based time-series classification benchmark")
    commands = parser.add_subparsers(dest="command", required=True)

    commands.add_parser("render", parents=[common], help="populate the chart cache only")
    commands.add_parser("train", parents=[common], help="train and test one configuration")
    commands.add_parser("sweep", parents=[common], help="run the full grid with resume")

    report = commands.add_parser("report", parents=[common], help="report tables from a results file")
    report.add_argument("kind", choices=REPORT_KINDS)
    report.add_argument("--matrix", type=Path, help="dataset x method accuracy CSV (ranks, stats, deviation)")
    report.add_argument("--format", choices=["markdown", "csv"], default="markdown")
    report.add_argument("--output", type=Path, help="write to this file instead of stdout")
    report.add_argument("--resolution", type=int, help="resolution for delta and settings tables")
    report.add_argument("--group-by", choices=["task_type", "train_size", "length_group", "data_type"])

    selfcheck = commands.add_parser("selfcheck", parents=[common], help="gradient, raster and stats oracles")
    selfcheck.add_argument("--suite", action="append", choices=list(SUITES), help="repeat to pick suites")
    return parser


def config_overrides(args: argparse.Namespace) -> dict:
    """Nested override dict from the config flags present on the command line."""
    overrides: dict = {}
    values = vars(args)
    for key in TOP_LEVEL_KEYS:
        if key in values:
            overrides[key] = _flag_value(values[key], sequence=False)
    for section, model in SECTIONS.items():
        for name, info in model.model_fields.items():
            dest = f"{section}__{name}"
            if dest in values:
                overrides.setdefault(section, {})[name] = _flag_value(values[dest], _is_sequence(info.annotation))
    return overrides


def format_validation_error(exc: ValidationError) -> list[str]:
    """One ``dotted.key: message`` line per validation error."""
    return [f"{'.'.join(str(part) for part in error['loc'])}: {error['msg']}" for error in exc.errors()]


# ---- commands -------------------------------------------------------------------------


def _runs(config: AppConfig) -> list[RunConfig]:
    if config.sweep is not None:
        return expand_grid(config.sweep)
    if config.run is not None:
        return [config.run]
    raise CommandError("no run or sweep section configured")


def _loader(config: AppConfig):
    try:
        return partial(load_from_root, config.require_data_root())
    except (ValueError, FileNotFoundError) as exc:
        raise CommandError(str(exc)) from exc


def _checkpoint_dir(config: AppConfig) -> Path | None:
    return config.checkpoint_dir if config.save_checkpoints else None


def cmd_render(config: AppConfig) -> int:
    """Render every chart the configured run or sweep needs; returns the number drawn."""
    runs = _runs(config)
    rendered = prerender(runs, _loader(config), config.cache_dir, workers=config.workers)
    print(f"Chart cache {config.cache_dir}: {rendered} charts rendered for {len(runs)} runs")
    return rendered


def cmd_train(config: AppConfig) -> RunRecord:
    """Train one configured cell, append its record and print its metrics."""
    if config.run is None:
        raise CommandError("train needs a [run] section or --run.* flags")
    record = safe_run(
        config.run,
        loader=_loader(config),
        train_cfg=config.train,
        model_cfg=config.model,
        cache_dir=config.cache_dir,
        val_fraction=config.val_fraction,
        split_seed=config.split_seed,
        checkpoint_dir=_checkpoint_dir(config),
    )
    append_record(config.results_path, record)

    print("=" * 70)
    print(f"Run {record.run_id}: {config.run.dataset} / {config.run.architecture} / seed {record.seed}")
    print("=" * 70)
    if record.status != "ok":
        print(f"FAILED: {record.error}")
        return record
    metrics = record.metrics
    print(f"  accuracy   {metrics.accuracy:.4f}")
    print(f"  macro F1   {metrics.macro_f1:.4f}")
    print(f"  AUC        {'n/a' if metrics.auc is None else f'{metrics.auc:.4f}'}")
    print(f"  best epoch {record.best_epoch} of {len(record.history)}")
    if record.alpha is not None:
        weights = ", ".join(f"{name}={a:.3f}" for name, a in zip(record.branches, record.mean_alpha))
        print(f"  fusion weights {weights} (mean of {len(record.alpha)} test batches)")
    return record


def cmd_sweep(config: AppConfig) -> CompletionReport:
    """Run the configured grid, skipping runs already recorded as successful."""
    if config.sweep is None:
        raise CommandError("sweep needs a [sweep] section or --sweep.* flags")
    report = execute(
        expand_grid(config.sweep),
        results_path=config.results_path,
        train_cfg=config.train,
        loader=_loader(config),
        cache_dir=config.cache_dir,
        model_cfg=config.model,
        val_fraction=config.val_fraction,
        split_seed=config.split_seed,
        workers=config.workers,
        checkpoint_dir=_checkpoint_dir(config),
    )
    print(report.summary())
    return report


def _labelled_tables(tables: dict[str, pd.DataFrame], fmt: str, label: str) -> str:
    if fmt == "csv":
        frames = [table.reset_index().assign(**{label: name}) for name, table in tables.items()]
        return render_table(pd.concat(frames, ignore_index=True), "csv", index=False)
    blocks = [f"## {name}\n\n{render_table(table, 'markdown', index=True)}" for name, table in tables.items()]
    return "\n\n".join(blocks)


def cmd_report(
    config: AppConfig,
    kind: str,
    fmt: str = "markdown",
    matrix_path: Path | None = None,
    resolution: int | None = None,
    group_by: str | None = None,
) -> str:
    """Build one report as CSV or Markdown text."""
    matrix = read_matrix(matrix_path) if matrix_path is not None else None
    results = None
    if matrix is None:
        results = load_results(config.results_path)
    elif kind in ("delta", "settings"):
        raise CommandError(f"report {kind} reads a results file, not a matrix")

    match kind:
        case "delta":
            table = report_delta_table(results, threshold=config.delta_threshold, resolution=resolution)
            if fmt == "csv":
                return render_table(table, "csv", index=False)
            counts = delta_group_counts(table).to_frame("datasets")
            return render_table(table, fmt, index=False) + "\n\n" + render_table(counts, fmt)
        case "settings":
            settings = report_setting_matrix(results, resolution=resolution)
            tables = {**settings.tables, "aggregate": settings.aggregate}
            return _labelled_tables(tables, fmt, "table")
        case "ranks":
            if matrix is not None:
                groups = matrix_groups(matrix.index, group_by) if group_by else None
                table = rank_table(matrix, groups)
            else:
                table = report_rank_table(results, group_by=group_by)
            return render_table(table, fmt, index=False)
        case "stats":
            if matrix is not None:
                tables = {"summary": method_summary(matrix), "comparisons": pairwise_comparisons(matrix)}
                return _labelled_tables({k: v.set_index(v.columns[0]) for k, v in tables.items()}, fmt, "table")
            study = report_resolution_table(results)
            tables = {
                "accuracy by length group": study.table,
                "overall": study.overall.set_index("method"),
                "comparisons": study.comparisons.set_index("comparison"),
            }
            return _labelled_tables(tables, fmt, "table")
        case "deviation":
            source = matrix if matrix is not None else accuracy_matrix(results)
            return render_table(deviation_summary(median_deviation(source)), fmt)
    raise CommandError(f"unknown report kind {kind!r}")


def cmd_selfcheck(suites: list[str] | None = None) -> bool:
    """Run the self-check suites and print one line per check; True when all pass."""
    results = run_selfcheck(suites)
    table = pd.DataFrame([vars(result) for result in results])
    table["passed"] = table["passed"].map({True: "pass", False: "FAIL"})
    print(table.to_markdown(index=False))
    summary = table.groupby("suite")["passed"].apply(lambda s: f"{(s == 'pass').sum()}/{len(s)}")
    print()
    for suite, score in summary.items():
        print(f"{suite:10s} {score} passed")
    return bool(all(result.passed for result in results))


# ---- entry point --------------------------------------------------------------------------


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)

    try:
        config = load_app_config(args.config, **config_overrides(args))
    except ValidationError as exc:
        for line in format_validation_error(exc):
            print(f"config error: {line}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    logging.basicConfig(level=config.log_level.upper(), format=LOG_FORMAT)

    try:
        match args.command:
            case "render":
                cmd_render(config)
                return EXIT_OK
            case "train":
                return EXIT_OK if cmd_train(config).status == "ok" else EXIT_FAILED
            case "sweep":
                return EXIT_OK if cmd_sweep(config).ok else EXIT_FAILED
            case "report":
                text = cmd_report(config, args.kind, args.format, args.matrix, args.resolution, args.group_by)
                if args.output is not None:
                    args.output.parent.mkdir(parents=True, exist_ok=True)
                    args.output.write_text(text.rstrip("\n") + "\n", encoding="utf-8")
                    print(f"Wrote {args.kind} report to {args.output}")
                else:
                    print(text)
                return EXIT_OK
            case "selfcheck":
                return EXIT_OK if cmd_selfcheck(args.suite) else EXIT_FAILED
    except (CommandError, ValidationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, ValueError) as exc:
        logger.error("%s", exc)
        return EXIT_FAILED
    return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
