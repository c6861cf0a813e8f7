"""Training protocol, metrics and run-record persistence for one experiment cell."""

from __future__ import annotations

import logging
import math
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Literal

import numpy as np
from pydantic import BaseModel, ValidationError
from sklearn.metrics import f1_score, roc_auc_score

from src.config import RunConfig, TrainConfig
from src.model import ModelInputs
from src.nn.functional import cross_entropy, softmax
from src.nn.modules import Module
from src.nn.optim import Adam, ReduceLROnPlateau
from src.nn.tensor import Tensor, no_grad

logger = logging.getLogger(__name__)

_write_lock = threading.Lock()


class TrainingDivergedError(RuntimeError):
    """Loss became NaN or infinite."""

    def __init__(self, epoch: int, batch: int, loss: float):
        self.epoch = epoch
        self.batch = batch
        self.loss = loss
        super().__init__(f"non-finite loss {loss} at epoch {epoch}, batch {batch}")


# ---- data ------------------------------------------------------------------------


@dataclass
class SplitData:
    """Model-ready arrays for one split: uint8 chart stacks per type, raw series, labels."""

    labels: np.ndarray
    series: np.ndarray
    charts: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.series = np.asarray(self.series, dtype=np.float32)
        for name, stack in self.charts.items():
            if len(stack) != len(self.labels):
                raise ValueError(f"{name} charts: {len(stack)} images for {len(self.labels)} labels")

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    def inputs(self, index: np.ndarray | None = None) -> ModelInputs:
        """Batch tensors: charts as channel-first floats in [0, 1]."""
        index = np.arange(len(self)) if index is None else index
        charts = {
            name: Tensor(stack[index].transpose(0, 3, 1, 2).astype(np.float32) / 255.0)
            for name, stack in self.charts.items()
        }
        return ModelInputs(charts=charts, series=Tensor(self.series[index]))


# ---- records ---------------------------------------------------------------------


class Metrics(BaseModel):
    accuracy: float
    macro_f1: float
    auc: float | None = None  # undefined when the split holds a single class


class EpochStats(BaseModel):
    epoch: int
    train_loss: float
    val_loss: float
    val_accuracy: float
    lr: float


class RunRecord(BaseModel):
    """One persisted line of ``results.jsonl``."""

    run_id: str
    config: RunConfig
    status: Literal["ok", "failed"] = "ok"
    error: str | None = None
    seed: int
    history: list[EpochStats] = []
    best_epoch: int | None = None
    val_accuracy: float | None = None
    metrics: Metrics | None = None
    branches: list[str] = []
    alpha: list[list[float]] | None = None  # mean fusion weights per evaluation batch
    n_parameters: int | None = None
    n_classes: int | None = None
    length: int | None = None
    n_train: int | None = None
    wall_time: float = 0.0
    checkpoint: str | None = None

    @property
    def mean_alpha(self) -> list[float] | None:
        if not self.alpha:
            return None
        return np.mean(self.alpha, axis=0).tolist()


# ---- metrics -------------------------------------------------------------------------


def compute_metrics(labels: np.ndarray, probs: np.ndarray) -> Metrics:
    """Accuracy, macro-F1 (0 for undefined classes) and AUC.

    AUC is the binary ROC AUC for two classes and the mean one-vs-rest AUC
    otherwise, over classes that have both positive and negative samples; None
    when no class qualifies.
    """
    labels = np.asarray(labels, dtype=np.int64)
    probs = np.asarray(probs, dtype=np.float64)
    n_classes = probs.shape[1]
    preds = probs.argmax(axis=1)

    accuracy = float(np.count_nonzero(preds == labels)) / len(labels)
    macro_f1 = float(
        f1_score(labels, preds, labels=list(range(n_classes)), average="macro", zero_division=0)
    )

    if n_classes == 2:
        auc = float(roc_auc_score(labels, probs[:, 1])) if len(np.unique(labels)) == 2 else None
    else:
        per_class = [
            roc_auc_score(labels == c, probs[:, c])
            for c in range(n_classes)
            if 0 < np.count_nonzero(labels == c) < len(labels)
        ]
        auc = float(np.mean(per_class)) if per_class else None
    return Metrics(accuracy=accuracy, macro_f1=macro_f1, auc=auc)


def predict_proba(
    model: Module, data: SplitData, batch_size: int = 64
) -> tuple[np.ndarray, np.ndarray | None]:
    """Class probabilities in eval mode, plus fusion weights when the model has them.

    The weights come back as one row per evaluation batch: the batch mean of
    each branch weight, so every row lies on the simplex.
    """
    model.eval()
    probs, alphas = [], []
    with no_grad():
        for start in range(0, len(data), batch_size):
            index = np.arange(start, min(start + batch_size, len(data)))
            probs.append(softmax(model(data.inputs(index)), axis=-1).data)
            alpha = getattr(model, "last_alpha", None)
            if alpha is not None:
                alphas.append(alpha.mean(axis=0))
    batch_alpha = np.stack(alphas) if alphas else None
    return np.concatenate(probs), batch_alpha


def evaluate(model: Module, data: SplitData, batch_size: int = 64) -> Metrics:
    probs, _ = predict_proba(model, data, batch_size)
    return compute_metrics(data.labels, probs)


def _validation_pass(model: Module, data: SplitData, batch_size: int) -> tuple[float, float]:
    probs, _ = predict_proba(model, data, batch_size)
    picked = probs[np.arange(len(data)), data.labels]
    loss = float(-np.mean(np.log(np.maximum(picked, np.finfo(np.float64).tiny))))
    accuracy = float(np.count_nonzero(probs.argmax(axis=1) == data.labels)) / len(data)
    return loss, accuracy


# ---- training --------------------------------------------------------------------


def _minibatches(order: np.ndarray, batch_size: int) -> list[np.ndarray]:
    batches = [order[i : i + batch_size] for i in range(0, len(order), batch_size)]
    # a trailing singleton batch cannot be batch-normalized; fold it into its neighbour
    if len(batches) > 1 and len(batches[-1]) == 1:
        batches[-2] = np.concatenate([batches[-2], batches.pop()])
    return batches


def best_epoch(history: list[EpochStats]) -> int:
    """First epoch reaching the maximum validation accuracy."""
    best = max(history, key=lambda stats: stats.val_accuracy)
    return best.epoch


def train(
    model: Module,
    train_data: SplitData,
    val_data: SplitData,
    cfg: TrainConfig,
    seed: int = 0,
) -> tuple[Module, list[EpochStats]]:
    """Fit ``model`` with Adam, plateau LR halving and accuracy-based early stopping.

    Stops after ``cfg.patience`` epochs without a strictly better validation
    accuracy (or at ``cfg.max_epochs``) and restores the best-accuracy weights.

    Returns:
        The model (best weights restored) and the per-epoch history.
    """
    if len(train_data) == 0 or len(val_data) == 0:
        raise ValueError("train and validation splits must be non-empty")

    rng = np.random.default_rng(seed)
    optimizer = Adam(
        model,
        lr=cfg.lr,
        betas=(cfg.beta1, cfg.beta2),
        eps=cfg.eps,
        weight_decay=cfg.weight_decay,
        decoupled=cfg.decoupled_weight_decay,
    )
    scheduler = ReduceLROnPlateau(optimizer, factor=cfg.lr_factor, patience=cfg.lr_patience, min_lr=cfg.min_lr)

    history: list[EpochStats] = []
    best_accuracy = -math.inf
    best_at = 0
    best_state = model.state_dict()

    for epoch in range(1, cfg.max_epochs + 1):
        lr = optimizer.lr
        model.train()
        losses = []
        for batch, index in enumerate(_minibatches(rng.permutation(len(train_data)), cfg.batch_size)):
            optimizer.zero_grad()
            loss = cross_entropy(model(train_data.inputs(index)), train_data.labels[index])
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingDivergedError(epoch, batch, value)
            loss.backward()
            optimizer.step()
            losses.append(value)

        val_loss, val_accuracy = _validation_pass(model, val_data, cfg.eval_batch_size)
        if not math.isfinite(val_loss):
            raise TrainingDivergedError(epoch, -1, val_loss)
        stats = EpochStats(
            epoch=epoch,
            train_loss=float(np.mean(losses)),
            val_loss=val_loss,
            val_accuracy=val_accuracy,
            lr=lr,
        )
        history.append(stats)
        logger.debug(
            "epoch %d: loss %.4f val_loss %.4f val_acc %.4f lr %.2g",
            epoch, stats.train_loss, val_loss, val_accuracy, lr,
        )

        if val_accuracy > best_accuracy:
            best_accuracy, best_at = val_accuracy, epoch
            best_state = model.state_dict()
        scheduler.step(val_loss)
        if epoch - best_at >= cfg.patience:
            break

    model.load_state_dict(best_state)
    return model, history


# ---- repeats and persistence ------------------------------------------------------


def default_repeats(architecture: str) -> int:
    """10 seeds for single-chart runs, 3 for every fused architecture."""
    return 10 if architecture == "single_chart" else 3


@dataclass
class RepeatSummary:
    mean: Metrics
    std: Metrics
    records: list[RunRecord]


def run_repeats(
    run_cfg: RunConfig,
    n_runs: int,
    base_seed: int,
    run_fn: Callable[[RunConfig], RunRecord],
    results_path: str | Path | None = None,
) -> RepeatSummary:
    """Run ``run_cfg`` with seeds ``base_seed + i`` and aggregate the test metrics.

    Standard deviations are population (ddof=0) over successful runs.
    """
    if n_runs < 1:
        raise ValueError(f"n_runs must be >= 1, got {n_runs}")
    records = []
    for i in range(n_runs):
        record = run_fn(run_cfg.model_copy(update={"seed": base_seed + i}))
        if results_path is not None:
            append_record(results_path, record)
        records.append(record)

    done = [r.metrics for r in records if r.status == "ok" and r.metrics is not None]
    if not done:
        raise RuntimeError(f"all {n_runs} runs of {run_cfg.dataset} failed")
    table = np.array(
        [[m.accuracy, m.macro_f1, math.nan if m.auc is None else m.auc] for m in done],
        dtype=np.float64,
    )
    mean, std = table.mean(axis=0), table.std(axis=0)
    auc_mean = None if math.isnan(mean[2]) else float(mean[2])
    auc_std = None if math.isnan(std[2]) else float(std[2])
    return RepeatSummary(
        mean=Metrics(accuracy=mean[0], macro_f1=mean[1], auc=auc_mean),
        std=Metrics(accuracy=std[0], macro_f1=std[1], auc=auc_std),
        records=records,
    )


def _ends_mid_line(path: Path) -> bool:
    if not path.exists() or path.stat().st_size == 0:
        return False
    with path.open("rb") as handle:
        handle.seek(-1, os.SEEK_END)
        return handle.read(1) != b"\n"


def append_record(path: str | Path, record: RunRecord) -> None:
    """Append one JSON line and fsync it before returning.

    A torn tail left by an interrupted write is closed off with a newline
    first, so the new record always starts on its own line.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    line = record.model_dump_json() + "\n"
    with _write_lock:
        if _ends_mid_line(path):
            logger.warning("Closing torn record at the end of %s", path)
            line = "\n" + line
        with path.open("a", encoding="utf-8") as handle:
            handle.write(line)
            handle.flush()
            os.fsync(handle.fileno())


def load_records(path: str | Path) -> list[RunRecord]:
    """Read every valid record; a torn line from an interrupted write is skipped."""
    path = Path(path)
    if not path.exists():
        return []
    records = []
    lines = path.read_text(encoding="utf-8").splitlines()
    for number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            records.append(RunRecord.model_validate_json(line))
        except ValidationError:
            logger.warning("Skipping unreadable record at %s:%d", path, number)
    return records
