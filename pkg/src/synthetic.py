"""Deterministic toy datasets in the UCR layout, for tests and self-checks."""

from __future__ import annotations

import numpy as np

from src.dataset_io import DatasetMeta, LabeledSeriesSet

SHAPES = ("sine", "square", "sawtooth", "triangle")


def _balanced_labels(n: int, n_classes: int, rng: np.random.Generator) -> np.ndarray:
    return rng.permutation(np.arange(n) % n_classes)


def _wrap(
    name: str,
    split: str,
    values: np.ndarray,
    labels: np.ndarray,
    n_classes: int,
    counts: dict[str, int],
) -> LabeledSeriesSet:
    meta = DatasetMeta(
        name=name,
        length=values.shape[1],
        n_classes=n_classes,
        raw_label_map={float(c + 1): c for c in range(n_classes)},
        counts=counts,
    )
    return LabeledSeriesSet(values=values, labels=labels, meta=meta, split=split)


def _make(name, generate, n_train, n_test, n_classes, seed):
    rng = np.random.default_rng(seed)
    counts = {"train": n_train, "test": n_test}
    splits = []
    for split, n in (("train", n_train), ("test", n_test)):
        labels = _balanced_labels(n, n_classes, rng)
        values = np.stack([generate(int(label), rng) for label in labels]).astype(np.float32)
        splits.append(_wrap(name, split, values, labels, n_classes, counts))
    train, test = splits
    test.meta = train.meta
    return train, test


def make_offset_dataset(
    n_train: int = 40,
    n_test: int = 40,
    length: int = 32,
    n_classes: int = 2,
    offset: float = 3.0,
    noise: float = 0.05,
    seed: int = 0,
    name: str = "SyntheticOffset",
) -> tuple[LabeledSeriesSet, LabeledSeriesSet]:
    """Class ``c`` is a random-phase sine shifted up by ``c * offset``.

    Every class shares the same shape distribution, so per-instance min-max
    scaling (and therefore every chart) hides the label; only the raw values
    carry it.
    """
    t = np.linspace(0.0, 2.0 * np.pi, length)

    def generate(label: int, rng: np.random.Generator) -> np.ndarray:
        phase = rng.uniform(0.0, 2.0 * np.pi)
        return np.sin(t + phase) + noise * rng.standard_normal(length) + label * offset

    return _make(name, generate, n_train, n_test, n_classes, seed)


def waveform(shape: str, length: int, phase: float) -> np.ndarray:
    u = (np.linspace(0.0, 2.0, length) + phase / (2.0 * np.pi)) % 1.0
    match shape:
        case "sine":
            return np.sin(2.0 * np.pi * u)
        case "square":
            return np.where(u < 0.5, 1.0, -1.0)
        case "sawtooth":
            return 2.0 * u - 1.0
        case "triangle":
            return 1.0 - 4.0 * np.abs(u - 0.5)
    raise ValueError(f"unknown waveform {shape!r}")


def make_shape_dataset(
    n_train: int = 40,
    n_test: int = 40,
    length: int = 64,
    n_classes: int = 2,
    noise: float = 0.05,
    seed: int = 0,
    name: str = "SyntheticShape",
) -> tuple[LabeledSeriesSet, LabeledSeriesSet]:
    """Class ``c`` is waveform ``SHAPES[c]`` with random phase, scale and level."""
    if not 2 <= n_classes <= len(SHAPES):
        raise ValueError(f"n_classes must lie in [2, {len(SHAPES)}], got {n_classes}")

    def generate(label: int, rng: np.random.Generator) -> np.ndarray:
        wave = waveform(SHAPES[label], length, rng.uniform(0.0, 2.0 * np.pi))
        return rng.uniform(0.5, 2.0) * wave + rng.normal() + noise * rng.standard_normal(length)

    return _make(name, generate, n_train, n_test, n_classes, seed)
