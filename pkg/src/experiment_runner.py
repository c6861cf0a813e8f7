"""Ablation grid expansion and resumable sweep execution."""

from __future__ import annotations

import logging
import signal
import time
import traceback
from concurrent.futures import FIRST_COMPLETED, ProcessPoolExecutor, wait
from dataclasses import dataclass, field
from functools import partial
from itertools import product
from pathlib import Path
from typing import Callable

import numpy as np
import pandas as pd

from src.chart_render import ChartSpec, chart_specs, load_chart_stack, render_cache, render_stack
from src.config import CHART_TYPES, ModelConfig, RunConfig, SweepConfig, TrainConfig
from src.dataset_io import LabeledSeriesSet, load_ucr_dataset, stratified_holdout
from src.model import build_model
from src.nn.checkpoint import save_checkpoint
from src.train_eval import (
    RunRecord,
    SplitData,
    append_record,
    best_epoch,
    compute_metrics,
    default_repeats,
    load_records,
    predict_proba,
    train,
)

logger = logging.getLogger(__name__)

DatasetLoader = Callable[[str], tuple[LabeledSeriesSet, LabeledSeriesSet]]


# ---- grid ----------------------------------------------------------------------------


def _bindings(architecture: str, sweep: SweepConfig) -> list[dict]:
    """Chart/fusion/encoder combinations an architecture takes from the sweep axes."""
    singles = [(chart_type,) for chart_type in sweep.chart_types]
    match architecture:
        case "single_chart":
            return [{"chart_types": c, "fusion": "concat", "numeric_encoder": None} for c in singles]
        case "chart_numeric":
            combos = product(singles, sweep.fusion_strategies, sweep.numeric_encoders)
            return [{"chart_types": c, "fusion": f, "numeric_encoder": e} for c, f, e in combos]
        case "multi_chart":
            return [
                {"chart_types": CHART_TYPES, "fusion": f, "numeric_encoder": None}
                for f in sweep.fusion_strategies
            ]
        case "multimodal":
            combos = product(sweep.fusion_strategies, sweep.numeric_encoders)
            return [{"chart_types": CHART_TYPES, "fusion": f, "numeric_encoder": e} for f, e in combos]
    raise ValueError(f"unknown architecture {architecture!r}")


def expand_grid(sweep: SweepConfig) -> list[RunConfig]:
    """Cartesian product of the sweep axes, one RunConfig per cell and seed.

    Single-chart architectures take each chart type in turn; multi-chart and
    multimodal bind all four. Seeds run from ``base_seed`` for ``repeats``
    (or the per-architecture default). Order is deterministic and run ids
    are unique.
    """
    for axis in (
        "datasets", "chart_types", "color_modes", "label_modes", "resolutions",
        "architectures", "fusion_strategies", "numeric_encoders", "backbones",
    ):
        if not getattr(sweep, axis):
            raise ValueError(f"sweep axis {axis!r} is empty")

    runs: dict[str, RunConfig] = {}
    for dataset, architecture, resolution, backbone, color, label in product(
        sweep.datasets,
        sweep.architectures,
        sweep.resolutions,
        sweep.backbones,
        sweep.color_modes,
        sweep.label_modes,
    ):
        repeats = sweep.repeats or default_repeats(architecture)
        for binding in _bindings(architecture, sweep):
            for i in range(repeats):
                run = RunConfig(
                    dataset=dataset,
                    architecture=architecture,
                    color_mode=color,
                    label_mode=label,
                    resolution=resolution,
                    backbone=backbone,
                    seed=sweep.base_seed + i,
                    **binding,
                )
                runs.setdefault(run.run_id, run)
    return list(runs.values())


# ---- single run -------------------------------------------------------------------------


def run_specs(run: RunConfig) -> list[ChartSpec]:
    return chart_specs(run.chart_types, run.color_mode, run.label_mode, run.resolution)


def _chart_stacks(
    data: LabeledSeriesSet, specs: list[ChartSpec], cache_dir: Path | None, prerendered: bool = False
) -> dict[str, np.ndarray]:
    if cache_dir is None:
        return {spec.chart_type: render_stack(data, spec) for spec in specs}
    if not prerendered:
        render_cache(data, specs, cache_dir)
    return {spec.chart_type: load_chart_stack(cache_dir, data, spec) for spec in specs}


def load_from_root(data_root: str | Path, name: str) -> tuple[LabeledSeriesSet, LabeledSeriesSet]:
    return load_ucr_dataset(data_root, name)


def run_single(
    run: RunConfig,
    loader: DatasetLoader,
    train_cfg: TrainConfig,
    model_cfg: ModelConfig | None = None,
    cache_dir: str | Path | None = None,
    val_fraction: float = 0.2,
    split_seed: int = 0,
    checkpoint_dir: str | Path | None = None,
    prerendered: bool = False,
) -> RunRecord:
    """Train and test one cell end to end.

    The model trains on the whole archive TRAIN split. Validation is a
    stratified ``val_fraction`` holdout of the archive TEST split fixed by
    ``split_seed``; the rest of TEST is the test set. ``run.seed`` drives
    initialization and batch order. With ``prerendered`` the chart cache is
    only read, never written.
    """
    started = time.perf_counter()
    train_set, test_set = loader(run.dataset)
    val_set, rest_set = stratified_holdout(test_set, val_fraction, split_seed)

    specs = run_specs(run)
    cache = Path(cache_dir) if cache_dir is not None else None
    train_charts = _chart_stacks(train_set, specs, cache, prerendered)
    test_charts = _chart_stacks(test_set, specs, cache, prerendered)

    def split(subset: LabeledSeriesSet, charts: dict[str, np.ndarray], rows: np.ndarray) -> SplitData:
        return SplitData(
            labels=subset.labels,
            series=subset.values,
            charts={name: stack[rows] for name, stack in charts.items()},
        )

    fit = split(train_set, train_charts, np.arange(len(train_set)))
    val = split(val_set, test_charts, val_set.source_index)
    test = split(rest_set, test_charts, rest_set.source_index)

    model = build_model(run, train_set.meta.n_classes, train_set.meta.length, model_cfg)
    logger.info("Run %s: %s %s seed=%d", run.run_id, run.dataset, run.architecture, run.seed)
    model, history = train(model, fit, val, train_cfg, seed=run.seed)

    probs, alpha = predict_proba(model, test, train_cfg.eval_batch_size)
    metrics = compute_metrics(test.labels, probs)

    checkpoint = None
    if checkpoint_dir is not None:
        checkpoint = str(save_checkpoint(model, Path(checkpoint_dir) / f"{run.run_id}.ckpt"))

    best = best_epoch(history)
    record = RunRecord(
        run_id=run.run_id,
        config=run,
        seed=run.seed,
        history=history,
        best_epoch=best,
        val_accuracy=history[best - 1].val_accuracy,
        metrics=metrics,
        branches=list(model.branch_names),
        alpha=None if alpha is None else alpha.astype(float).tolist(),
        n_parameters=model.num_parameters(),
        n_classes=train_set.meta.n_classes,
        length=train_set.meta.length,
        n_train=len(train_set),
        wall_time=time.perf_counter() - started,
        checkpoint=checkpoint,
    )
    logger.info("Run %s finished: test accuracy %.4f", run.run_id, metrics.accuracy)
    return record


def safe_run(run: RunConfig, **kwargs) -> RunRecord:
    """``run_single`` that turns any exception into a failed record."""
    started = time.perf_counter()
    try:
        return run_single(run, **kwargs)
    except Exception as exc:
        logger.warning("Run %s (%s) failed: %s", run.run_id, run.dataset, exc)
        logger.debug("%s", traceback.format_exc())
        return RunRecord(
            run_id=run.run_id,
            config=run,
            seed=run.seed,
            status="failed",
            error=f"{type(exc).__name__}: {exc}",
            wall_time=time.perf_counter() - started,
        )


# ---- sweep ---------------------------------------------------------------------------


@dataclass
class CompletionReport:
    total: int
    skipped: int
    executed: int = 0
    failed: list[str] = field(default_factory=list)
    interrupted: bool = False

    @property
    def ok(self) -> bool:
        return not self.failed and not self.interrupted

    def summary(self) -> str:
        return (
            f"{self.total} runs: {self.skipped} already done, {self.executed} executed, "
            f"{len(self.failed)} failed" + (" (interrupted)" if self.interrupted else "")
        )


class _StopFlag:
    """Turns SIGINT/SIGTERM into a request to stop scheduling new runs."""

    def __init__(self) -> None:
        self.requested = False
        self._previous: dict[int, object] = {}

    def _handle(self, signum, frame) -> None:
        logger.info("Received signal %d, finishing in-flight runs", signum)
        self.requested = True

    def __enter__(self) -> _StopFlag:
        for sig in (signal.SIGINT, signal.SIGTERM):
            try:
                self._previous[sig] = signal.signal(sig, self._handle)
            except ValueError:  # not in the main thread
                pass
        return self

    def __exit__(self, *exc) -> None:
        for sig, handler in self._previous.items():
            signal.signal(sig, handler)


def prerender(
    runs: list[RunConfig], loader: DatasetLoader, cache_dir: str | Path, workers: int = 1
) -> int:
    """Fill the chart cache for every (dataset, spec) the runs need; returns files rendered."""
    needed: dict[str, dict[str, ChartSpec]] = {}
    for run in runs:
        for spec in run_specs(run):
            needed.setdefault(run.dataset, {})[spec.slug] = spec

    rendered = 0
    for dataset, specs in needed.items():
        train_set, test_set = loader(dataset)
        for data in (train_set, test_set):
            rendered += render_cache(data, list(specs.values()), cache_dir, workers=workers).rendered
    return rendered


def execute(
    runs: list[RunConfig],
    results_path: str | Path,
    train_cfg: TrainConfig,
    loader: DatasetLoader | None = None,
    data_root: str | Path | None = None,
    cache_dir: str | Path | None = None,
    model_cfg: ModelConfig | None = None,
    val_fraction: float = 0.2,
    split_seed: int = 0,
    workers: int = 1,
    checkpoint_dir: str | Path | None = None,
) -> CompletionReport:
    """Run every configuration not already recorded as ``ok`` in ``results_path``.

    Charts are rendered into ``cache_dir`` before any training starts. Runs
    then only read the cache, so its manifest has a single writer. Records
    are appended by this process only, one line per finished run. A failed run
    is recorded and retried on the next invocation.
    """
    if loader is None:
        if data_root is None:
            raise ValueError("either loader or data_root is required")
        loader = partial(load_from_root, data_root)

    done = {record.run_id for record in load_records(results_path) if record.status == "ok"}
    pending = [run for run in runs if run.run_id not in done]
    report = CompletionReport(total=len(runs), skipped=len(runs) - len(pending))
    logger.info("Sweep: %d runs, %d already done", len(runs), report.skipped)
    if not pending:
        return report

    if cache_dir is not None:
        rendered = prerender(pending, loader, cache_dir, workers)
        logger.info("Chart cache ready (%d new files)", rendered)

    job = partial(
        safe_run,
        loader=loader,
        train_cfg=train_cfg,
        model_cfg=model_cfg,
        cache_dir=cache_dir,
        val_fraction=val_fraction,
        split_seed=split_seed,
        checkpoint_dir=checkpoint_dir,
        prerendered=cache_dir is not None,
    )

    def finish(record: RunRecord) -> None:
        append_record(results_path, record)
        report.executed += 1
        if record.status != "ok":
            report.failed.append(record.run_id)

    with _StopFlag() as stop:
        if workers <= 1:
            for run in pending:
                if stop.requested:
                    report.interrupted = True
                    break
                finish(job(run))
        else:
            queue = list(reversed(pending))
            with ProcessPoolExecutor(max_workers=workers) as pool:
                in_flight = set()
                while queue or in_flight:
                    while queue and len(in_flight) < workers and not stop.requested:
                        in_flight.add(pool.submit(job, queue.pop()))
                    if not in_flight:
                        report.interrupted = True
                        break
                    finished, in_flight = wait(in_flight, return_when=FIRST_COMPLETED)
                    for future in finished:
                        finish(future.result())

    logger.info("Sweep finished: %s", report.summary())
    return report


# ---- results --------------------------------------------------------------------------


RESULT_COLUMNS = [
    "run_id", "dataset", "architecture", "chart_types", "chart_type", "color_mode",
    "label_mode", "setting", "resolution", "backbone", "fusion", "numeric_encoder",
    "seed", "status", "accuracy", "macro_f1", "auc", "best_epoch", "epochs",
    "n_classes", "length", "n_train", "wall_time", "branches", "alpha", "alpha_batches",
]


def records_frame(records: list[RunRecord]) -> pd.DataFrame:
    """One row per record with the config flattened into columns."""
    rows = []
    for record in records:
        cfg = record.config
        metrics = record.metrics
        alpha = record.mean_alpha
        rows.append(
            {
                "run_id": record.run_id,
                "dataset": cfg.dataset,
                "architecture": cfg.architecture,
                "chart_types": "+".join(cfg.chart_types),
                "chart_type": cfg.chart_types[0] if len(cfg.chart_types) == 1 else None,
                "color_mode": cfg.color_mode,
                "label_mode": cfg.label_mode,
                "setting": cfg.setting_label,
                "resolution": cfg.resolution,
                "backbone": cfg.backbone,
                "fusion": cfg.fusion,
                "numeric_encoder": cfg.numeric_encoder,
                "seed": cfg.seed,
                "status": record.status,
                "accuracy": metrics.accuracy if metrics else np.nan,
                "macro_f1": metrics.macro_f1 if metrics else np.nan,
                "auc": metrics.auc if metrics and metrics.auc is not None else np.nan,
                "best_epoch": record.best_epoch,
                "epochs": len(record.history),
                "n_classes": record.n_classes,
                "length": record.length,
                "n_train": record.n_train,
                "wall_time": record.wall_time,
                "branches": "+".join(record.branches),
                "alpha": None if alpha is None else "+".join(f"{a:.4f}" for a in alpha),
                "alpha_batches": len(record.alpha) if record.alpha else 0,
            }
        )
    return pd.DataFrame(rows, columns=RESULT_COLUMNS)


def load_results(results_path: str | Path) -> pd.DataFrame:
    """Flattened results table; the last record per run id wins."""
    path = Path(results_path)
    if not path.exists():
        raise FileNotFoundError(f"Results not found at: {path}")
    frame = records_frame(load_records(path))
    return frame.drop_duplicates(subset="run_id", keep="last").reset_index(drop=True)
