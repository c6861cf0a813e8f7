"""Tests for the toy UCR-format datasets."""

import numpy as np
import pytest

from src.dataset_io import load_ucr_dataset, save_ucr_split
from src.synthetic import SHAPES, make_offset_dataset, make_shape_dataset, waveform


class TestShapeDataset:
    """Tests for the waveform-shape dataset."""

    def test_sizes_and_balance(self):
        train, test = make_shape_dataset(n_train=20, n_test=12, length=30, n_classes=4, seed=1)
        assert train.values.shape == (20, 30)
        assert train.values.dtype == np.float32
        assert len(test) == 12
        assert np.bincount(train.labels).tolist() == [5, 5, 5, 5]
        assert train.meta is test.meta

    def test_deterministic(self):
        a, _ = make_shape_dataset(seed=2)
        b, _ = make_shape_dataset(seed=2)
        c, _ = make_shape_dataset(seed=3)
        np.testing.assert_array_equal(a.values, b.values)
        assert not np.array_equal(a.values, c.values)

    @pytest.mark.parametrize("n_classes", [1, len(SHAPES) + 1])
    def test_class_count_range(self, n_classes):
        with pytest.raises(ValueError):
            make_shape_dataset(n_classes=n_classes)


def test_offset_only_in_level():
    train, _ = make_offset_dataset(n_train=40, length=32, offset=3.0, noise=0.0, seed=0)
    means = [train.values[train.labels == c].mean() for c in (0, 1)]
    assert means[1] - means[0] == pytest.approx(3.0, abs=0.3)

    lo = train.values.min(axis=1, keepdims=True)
    hi = train.values.max(axis=1, keepdims=True)
    scaled = (train.values - lo) / (hi - lo)
    scaled_means = [scaled[train.labels == c].mean() for c in (0, 1)]
    assert scaled_means[0] == pytest.approx(scaled_means[1], abs=0.05)


@pytest.mark.parametrize("shape", SHAPES)
def test_waveform_range(shape):
    wave = waveform(shape, 50, 0.3)
    assert wave.shape == (50,)
    assert wave.min() >= -1.0 - 1e-9 and wave.max() <= 1.0 + 1e-9


def test_unknown_waveform():
    with pytest.raises(ValueError):
        waveform("pulse", 10, 0.0)


def test_archive_round_trip(tmp_path):
    train, test = make_shape_dataset(n_train=8, n_test=6, length=12, seed=0)
    save_ucr_split(train, tmp_path, "train")
    save_ucr_split(test, tmp_path, "test")

    train_back, test_back = load_ucr_dataset(tmp_path, "SyntheticShape")

    np.testing.assert_allclose(train_back.values, train.values, rtol=1e-6)
    np.testing.assert_array_equal(test_back.labels, test.labels)
