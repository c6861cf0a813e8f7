"""Tests for UCR loading, label remapping and the stratified holdout."""

import numpy as np
import pytest

from src.dataset_io import (
    DatasetMeta,
    LabeledSeriesSet,
    LabelError,
    ParseError,
    load_split_parquet,
    load_ucr_dataset,
    load_ucr_split,
    remap_labels,
    save_split_parquet,
    save_ucr_split,
    stratified_holdout,
)


def write_split(root, name, split, rows):
    folder = root / name
    folder.mkdir(parents=True, exist_ok=True)
    path = folder / f"{name}_{split}.tsv"
    path.write_text("\n".join("\t".join(str(v) for v in row) for row in rows) + "\n")
    return path


def make_set(labels, length=4, name="Toy"):
    labels = np.asarray(labels)
    n_classes = int(labels.max()) + 1
    meta = DatasetMeta(
        name=name,
        length=length,
        n_classes=n_classes,
        raw_label_map={float(c): c for c in range(n_classes)},
    )
    values = np.arange(len(labels) * length, dtype=np.float32).reshape(len(labels), length)
    return LabeledSeriesSet(values=values, labels=labels, meta=meta)


class TestRemapLabels:
    """Tests for contiguous label mapping."""

    @pytest.mark.parametrize(
        "raw,expected",
        [
            ([-1, 1, 1, -1], [0, 1, 1, 0]),
            ([3, 5, 7, 5], [0, 1, 2, 1]),
            ([2.0, 1.0], [1, 0]),
        ],
    )
    def test_ascending_order(self, raw, expected):
        mapped, mapping = remap_labels(raw)
        assert mapped == expected
        assert sorted(mapping.values()) == list(range(len(set(raw))))

    def test_single_class_rejected(self):
        with pytest.raises(LabelError):
            remap_labels([4, 4, 4])


class TestLoadUcr:
    """Tests for reading the UCR tab-separated layout."""

    def test_loads_and_shares_train_map(self, tmp_path):
        write_split(tmp_path, "Toy", "TRAIN", [[-1, 0.5, 1.0, 1.5], [1, 2.0, 2.5, 3.0], [1, 0.0, 0.0, 0.1]])
        write_split(tmp_path, "Toy", "TEST", [[1, 1.0, 1.0, 1.0], [-1, 0.0, 0.5, 1.0]])

        train, test = load_ucr_dataset(tmp_path, "Toy")

        assert train.values.shape == (3, 3)
        assert train.values.dtype == np.float32
        assert train.labels.tolist() == [0, 1, 1]
        assert test.labels.tolist() == [1, 0]
        assert train.meta is test.meta
        assert train.meta.counts == {"train": 3, "test": 2}
        assert train.meta.raw_label_map == {-1.0: 0, 1.0: 1}

    def test_space_separated_rows(self, tmp_path):
        folder = tmp_path / "Spaced"
        folder.mkdir()
        (folder / "Spaced_TRAIN.tsv").write_text("1  0.1 0.2\n2  0.3 0.4\n\n")
        split = load_ucr_split(tmp_path, "Spaced", "train")
        assert len(split) == 2

    def test_ragged_row_reports_index(self, tmp_path):
        write_split(tmp_path, "Bad", "TRAIN", [[1, 0.1, 0.2], [2, 0.3], [1, 0.5, 0.6]])
        with pytest.raises(ParseError) as excinfo:
            load_ucr_split(tmp_path, "Bad", "train")
        assert excinfo.value.row == 1

    @pytest.mark.parametrize("token", ["abc", "nan", "inf"])
    def test_bad_token_rejected(self, tmp_path, token):
        write_split(tmp_path, "Bad", "TRAIN", [[1, 0.1, 0.2], [2, token, 0.4]])
        with pytest.raises(ParseError) as excinfo:
            load_ucr_split(tmp_path, "Bad", "train")
        assert excinfo.value.row == 1

    def test_test_label_absent_from_train(self, tmp_path):
        write_split(tmp_path, "Toy", "TRAIN", [[1, 0.1], [2, 0.2]])
        write_split(tmp_path, "Toy", "TEST", [[3, 0.3]])
        with pytest.raises(LabelError):
            load_ucr_dataset(tmp_path, "Toy")

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_ucr_split(tmp_path, "Nowhere", "train")

    def test_save_round_trip(self, tmp_path, shape_data):
        train, test = shape_data
        save_ucr_split(train, tmp_path, "train")
        save_ucr_split(test, tmp_path, "test")

        loaded_train, loaded_test = load_ucr_dataset(tmp_path, train.meta.name)

        np.testing.assert_array_equal(loaded_train.values, train.values)
        np.testing.assert_array_equal(loaded_test.labels, test.labels)


class TestStratifiedHoldout:
    """Tests for the per-class validation holdout."""

    def test_per_class_counts(self):
        data = make_set([0] * 50 + [1] * 50)
        held, rest = stratified_holdout(data, 0.2, seed=0)
        assert held.class_counts == {0: 10, 1: 10}
        assert len(rest) == 80
        assert held.split == "val"

    def test_partition_is_disjoint_and_complete(self):
        data = make_set([0] * 7 + [1] * 13 + [2] * 5)
        held, rest = stratified_holdout(data, 0.2, seed=5)
        together = np.concatenate([held.source_index, rest.source_index])
        assert sorted(together.tolist()) == list(range(len(data)))

    def test_deterministic_for_seed(self):
        data = make_set([0] * 30 + [1] * 30)
        first, _ = stratified_holdout(data, 0.2, seed=9)
        second, _ = stratified_holdout(data, 0.2, seed=9)
        other, _ = stratified_holdout(data, 0.2, seed=10)
        assert first.source_index.tolist() == second.source_index.tolist()
        assert first.source_index.tolist() != other.source_index.tolist()

    def test_singleton_class_holds_nothing(self):
        data = make_set([0] * 10 + [1])
        held, rest = stratified_holdout(data, 0.2, seed=0)
        assert held.class_counts == {0: 2}
        assert rest.class_counts[1] == 1

    def test_order_preserved(self):
        data = make_set([0, 1] * 20)
        held, rest = stratified_holdout(data, 0.25, seed=1)
        assert np.all(np.diff(held.source_index) > 0)
        assert np.all(np.diff(rest.source_index) > 0)

    @pytest.mark.parametrize("fraction", [0.0, 1.0, -0.1])
    def test_fraction_range(self, fraction):
        with pytest.raises(ValueError):
            stratified_holdout(make_set([0, 1, 0, 1]), fraction, seed=0)


def test_parquet_snapshot_keeps_meta(tmp_path, shape_data):
    train, _ = shape_data
    held, _ = stratified_holdout(train, 0.25, seed=2)
    path = save_split_parquet(held, tmp_path / "held.parquet")

    loaded = load_split_parquet(path)

    assert loaded.split == "val"
    assert loaded.meta.name == train.meta.name
    assert loaded.meta.raw_label_map == train.meta.raw_label_map
    np.testing.assert_array_equal(loaded.source_index, held.source_index)
    np.testing.assert_array_equal(loaded.values, held.values)
