"""UCR archive loading, label normalization and the stratified split protocol."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Literal, Sequence

import numpy as np
import pandas as pd
import pyarrow as pa
import pyarrow.parquet as pq

from src.config import DATASET_CATALOG

logger = logging.getLogger(__name__)

Split = Literal["train", "test"]

_SPLIT_SUFFIX = {"train": "TRAIN", "test": "TEST"}
_META_KEY = b"vtb_meta"


class DatasetError(ValueError):
    """Raised when a dataset file or split is unusable."""


class ParseError(DatasetError):
    """A malformed row in a UCR file."""

    def __init__(self, row: int, reason: str, path: Path | None = None):
        self.row = row
        self.reason = reason
        self.path = path
        where = f" in {path}" if path else ""
        super().__init__(f"row {row}{where}: {reason}")


class LabelError(DatasetError):
    """Degenerate or inconsistent class labels."""


@dataclass(frozen=True)
class TimeSeriesInstance:
    values: np.ndarray
    label: int


@dataclass
class DatasetMeta:
    """Per-dataset facts shared by every split of one dataset."""

    name: str
    length: int
    n_classes: int
    raw_label_map: dict[float, int]
    counts: dict[str, int] = field(default_factory=dict)


@dataclass
class LabeledSeriesSet:
    """A split held as a dense (n, T) float32 matrix plus contiguous labels."""

    values: np.ndarray
    labels: np.ndarray
    meta: DatasetMeta
    split: str = "train"
    source_index: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.values = np.ascontiguousarray(self.values, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.values.ndim != 2 or self.values.shape[0] != self.labels.shape[0]:
            raise DatasetError(
                f"values {self.values.shape} and labels {self.labels.shape} disagree"
            )
        if self.source_index is None:
            self.source_index = np.arange(len(self.labels), dtype=np.int64)

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    def __iter__(self) -> Iterator[TimeSeriesInstance]:
        for row, label in zip(self.values, self.labels):
            yield TimeSeriesInstance(values=row, label=int(label))

    @property
    def instances(self) -> list[TimeSeriesInstance]:
        return list(self)

    @property
    def class_counts(self) -> dict[int, int]:
        classes, counts = np.unique(self.labels, return_counts=True)
        return {int(c): int(n) for c, n in zip(classes, counts)}

    def subset(self, index: np.ndarray, split: str | None = None) -> LabeledSeriesSet:
        index = np.asarray(index, dtype=np.int64)
        return LabeledSeriesSet(
            values=self.values[index],
            labels=self.labels[index],
            meta=self.meta,
            split=split or self.split,
            source_index=self.source_index[index],
        )

    def raw_labels(self) -> np.ndarray:
        inverse = {v: k for k, v in self.meta.raw_label_map.items()}
        return np.array([inverse[int(label)] for label in self.labels], dtype=np.float64)


def remap_labels(raw: Sequence[float]) -> tuple[list[int], dict[float, int]]:
    """Map raw labels onto 0..C-1 in ascending raw-label order.

    Returns:
        The mapped labels (input order preserved) and the raw -> contiguous map.
    """
    raw_values = [float(v) for v in raw]
    distinct = sorted(set(raw_values))
    if len(distinct) < 2:
        raise LabelError(f"need at least 2 distinct labels, got {distinct}")
    mapping = {value: index for index, value in enumerate(distinct)}
    return [mapping[v] for v in raw_values], mapping


def _split_path(root: Path, name: str, split: Split) -> Path:
    return Path(root) / name / f"{name}_{_SPLIT_SUFFIX[split]}.tsv"


def _read_rows(path: Path) -> tuple[np.ndarray, np.ndarray]:
    """Parse a UCR file into raw labels and a float32 value matrix."""
    if not path.exists():
        raise FileNotFoundError(f"UCR split not found at: {path}")

    lines = [line.split() for line in path.read_text().splitlines()]
    rows = [tokens for tokens in lines if tokens]
    if not rows:
        raise DatasetError(f"no rows in {path}")

    width = len(rows[0])
    if width < 2:
        raise ParseError(0, "row has a label but no values", path)
    for index, tokens in enumerate(rows):
        if len(tokens) != width:
            raise ParseError(
                index, f"expected {width - 1} values, found {len(tokens) - 1}", path
            )

    frame = pd.DataFrame(rows).apply(pd.to_numeric, errors="coerce")
    numeric = frame.to_numpy(dtype=np.float64)
    bad = ~np.isfinite(numeric)
    if bad.any():
        row, col = np.argwhere(bad)[0]
        token = rows[row][col]
        raise ParseError(int(row), f"non-numeric or non-finite token {token!r}", path)

    return numeric[:, 0], numeric[:, 1:].astype(np.float32)


def _train_label_map(root: Path, name: str) -> dict[float, int]:
    raw, _ = _read_rows(_split_path(root, name, "train"))
    _, mapping = remap_labels(raw)
    return mapping


def load_ucr_split(
    root: str | Path,
    name: str,
    split: Split,
    label_map: dict[float, int] | None = None,
) -> LabeledSeriesSet:
    """Load one split of a UCR dataset.

    Labels are remapped with the TRAIN split's map so that both splits share
    one encoding; pass ``label_map`` to skip re-reading TRAIN.

    Args:
        root: Archive root containing ``<name>/<name>_TRAIN.tsv``.
        name: Dataset name, e.g. "GunPoint".
        split: "train" or "test".
        label_map: Optional raw -> contiguous label map.

    Returns:
        LabeledSeriesSet with row order preserved.
    """
    if split not in _SPLIT_SUFFIX:
        raise DatasetError(f"unknown split {split!r}")
    root = Path(root)
    raw, values = _read_rows(_split_path(root, name, split))

    if label_map is None:
        if split == "train":
            _, label_map = remap_labels(raw)
        else:
            label_map = _train_label_map(root, name)

    unseen = sorted(set(raw.tolist()) - set(label_map))
    if unseen:
        raise LabelError(f"{name} {split} has labels absent from TRAIN: {unseen}")

    labels = np.array([label_map[float(v)] for v in raw], dtype=np.int64)
    meta = DatasetMeta(
        name=name,
        length=values.shape[1],
        n_classes=len(label_map),
        raw_label_map=dict(label_map),
        counts={split: len(labels)},
    )

    declared = DATASET_CATALOG.get(name)
    if declared is not None and declared.length != meta.length:
        logger.warning("%s: declared length %d, loaded %d", name, declared.length, meta.length)

    logger.info(
        "Loaded %s %s: n=%d T=%d C=%d", name, split, len(labels), meta.length, meta.n_classes
    )
    return LabeledSeriesSet(values=values, labels=labels, meta=meta, split=split)


def load_ucr_dataset(root: str | Path, name: str) -> tuple[LabeledSeriesSet, LabeledSeriesSet]:
    """Load TRAIN and TEST with a shared label map and a shared meta record."""
    train = load_ucr_split(root, name, "train")
    test = load_ucr_split(root, name, "test", label_map=train.meta.raw_label_map)
    if test.meta.length != train.meta.length:
        raise DatasetError(
            f"{name}: TRAIN length {train.meta.length} != TEST length {test.meta.length}"
        )
    missing = set(range(train.meta.n_classes)) - set(train.class_counts)
    if missing:
        raise LabelError(f"{name}: classes {sorted(missing)} missing from TRAIN")

    meta = replace(train.meta, counts={"train": len(train), "test": len(test)})
    train.meta = meta
    test.meta = meta
    return train, test


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def stratified_holdout(
    data: LabeledSeriesSet, fraction: float, seed: int
) -> tuple[LabeledSeriesSet, LabeledSeriesSet]:
    """Carve a per-class ``round(fraction * n_c)`` sample out of a split.

    Each call owns its generator, so the same (data, fraction, seed) always
    yields the same partition. Both parts keep the source row order.

    Returns:
        (held, rest)
    """
    if not 0.0 < fraction < 1.0:
        raise DatasetError(f"fraction must lie in (0, 1), got {fraction}")

    rng = np.random.default_rng(seed)
    held_index: list[np.ndarray] = []
    for label in sorted(data.class_counts):
        members = np.flatnonzero(data.labels == label)
        take = _round_half_up(fraction * len(members))
        held_index.append(rng.permutation(members)[:take])

    held = np.sort(np.concatenate(held_index)) if held_index else np.array([], dtype=np.int64)
    rest = np.setdiff1d(np.arange(len(data)), held, assume_unique=True)
    return data.subset(held, split="val"), data.subset(rest)


def _format_value(value: float) -> str:
    # 9 significant digits round-trip any float32 exactly
    return np.format_float_positional(np.float32(value), unique=True, trim="-")


def save_ucr_split(data: LabeledSeriesSet, root: str | Path, split: Split) -> Path:
    """Write a split back out in UCR TSV layout using its raw labels."""
    path = _split_path(Path(root), data.meta.name, split)
    path.parent.mkdir(parents=True, exist_ok=True)

    raw = data.raw_labels()
    lines = []
    for label, row in zip(raw, data.values):
        label_token = _format_value(label) if not float(label).is_integer() else str(int(label))
        lines.append("\t".join([label_token, *(_format_value(v) for v in row)]))
    path.write_text("\n".join(lines) + "\n")
    return path


def save_split_parquet(data: LabeledSeriesSet, path: str | Path) -> Path:
    """Snapshot a split to Parquet, keeping the label map in schema metadata."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    frame = pd.DataFrame(data.values, columns=[f"t{i}" for i in range(data.meta.length)])
    frame.insert(0, "label", data.labels)
    frame.insert(1, "source_index", data.source_index)

    table = pa.Table.from_pandas(frame, preserve_index=False)
    meta = {
        "name": data.meta.name,
        "split": data.split,
        "length": data.meta.length,
        "n_classes": data.meta.n_classes,
        "raw_label_map": [[raw, mapped] for raw, mapped in data.meta.raw_label_map.items()],
        "counts": data.meta.counts,
    }
    existing = table.schema.metadata or {}
    table = table.replace_schema_metadata({**existing, _META_KEY: json.dumps(meta).encode()})
    pq.write_table(table, path)
    return path


def load_split_parquet(path: str | Path) -> LabeledSeriesSet:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Split snapshot not found at: {path}")

    table = pq.read_table(path)
    meta_raw = (table.schema.metadata or {}).get(_META_KEY)
    if meta_raw is None:
        raise DatasetError(f"{path} carries no split metadata")
    info = json.loads(meta_raw)

    frame = table.to_pandas()
    value_cols = [c for c in frame.columns if c.startswith("t")]
    meta = DatasetMeta(
        name=info["name"],
        length=int(info["length"]),
        n_classes=int(info["n_classes"]),
        raw_label_map={float(raw): int(mapped) for raw, mapped in info["raw_label_map"]},
        counts={k: int(v) for k, v in info["counts"].items()},
    )
    return LabeledSeriesSet(
        values=frame[value_cols].to_numpy(dtype=np.float32),
        labels=frame["label"].to_numpy(dtype=np.int64),
        meta=meta,
        split=info["split"],
        source_index=frame["source_index"].to_numpy(dtype=np.int64),
    )
