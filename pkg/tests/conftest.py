"""Shared fixtures: small UCR-format archives and fast training settings."""

import os
from pathlib import Path

import pandas as pd
import pytest

from src.config import ModelConfig, TrainConfig
from src.dataset_io import save_ucr_split
from src.synthetic import make_offset_dataset, make_shape_dataset

# Captured before the autouse fixture clears the environment
REAL_DATA_ROOT = os.environ.get("VTB_DATA_ROOT")


@pytest.fixture(autouse=True)
def _isolated_env(monkeypatch):
    """Keep a developer's VTB_* variables out of the tests."""
    for key in list(os.environ):
        if key.startswith("VTB_"):
            monkeypatch.delenv(key)


@pytest.fixture
def real_data_root():
    """Archive root from VTB_DATA_ROOT; skips the test when unset."""
    if not REAL_DATA_ROOT or not Path(REAL_DATA_ROOT).is_dir():
        pytest.skip("VTB_DATA_ROOT does not point at a UCR archive")
    return Path(REAL_DATA_ROOT)


@pytest.fixture
def shape_data():
    return make_shape_dataset(n_train=24, n_test=30, length=20, n_classes=2, seed=3)


@pytest.fixture
def ucr_root(tmp_path, shape_data):
    """Archive root holding SyntheticShape and SyntheticOffset."""
    root = tmp_path / "ucr"
    offset = make_offset_dataset(n_train=24, n_test=30, length=20, seed=4)
    for train, test in (shape_data, offset):
        save_ucr_split(train, root, "train")
        save_ucr_split(test, root, "test")
    return root


@pytest.fixture
def fast_train():
    return TrainConfig(max_epochs=3, patience=2, batch_size=8, eval_batch_size=16)


@pytest.fixture
def tiny_model():
    return ModelConfig(
        numeric_output_dim=8,
        fcn_hidden=8,
        d_model=8,
        heads=2,
        transformer_layers=1,
        oscnn_channels=2,
        oscnn_max_kernel=5,
        common_dim=8,
        head_hidden=8,
        dropout=0.0,
    )


# Best single-chart accuracy per UCR dataset at 64, 128 and 256 pixels
RESOLUTION_STUDY = [
    ("Crop", 46, 0.7221, 0.7233, 0.7293),
    ("SonyAIBORobotSurface1", 70, 0.6667, 0.7426, 0.7696),
    ("ChlorineConcentration", 166, 0.6198, 0.6751, 0.6838),
    ("Wafer", 152, 0.9966, 0.9967, 0.9956),
    ("GunPoint", 150, 0.9644, 0.9711, 0.9822),
    ("ECG5000", 140, 0.9318, 0.9384, 0.9367),
    ("PhalangesOutlinesCorrect", 80, 0.7983, 0.8003, 0.7933),
    ("ItalyPowerDemand", 24, 0.9578, 0.9604, 0.9615),
    ("Adiac", 176, 0.6292, 0.6419, 0.6308),
    ("FaceAll", 131, 0.7919, 0.8048, 0.9512),
    ("FacesUCR", 131, 0.8371, 0.8694, 0.9005),
    ("Strawberry", 235, 0.9594, 0.9648, 0.9649),
    ("ToeSegmentation1", 277, 0.9836, 0.8421, 0.7544),
    ("ToeSegmentation2", 343, 0.8974, 0.7718, 0.7538),
    ("CricketX", 300, 0.6607, 0.6683, 0.6948),
    ("CricketY", 300, 0.6752, 0.6940, 0.7068),
    ("CricketZ", 300, 0.7085, 0.7367, 0.7324),
    ("WordSynonyms", 270, 0.6081, 0.6457, 0.6541),
    ("ArrowHead", 251, 0.7580, 0.7390, 0.7333),
    ("Wine", 234, 0.6728, 0.7160, 0.6481),
    ("FordB", 500, 0.7493, 0.7884, 0.8004),
    ("Ham", 431, 0.6603, 0.7047, 0.6825),
    ("Beef", 470, 0.5667, 0.5888, 0.5444),
    ("BeetleFly", 512, 0.8000, 0.8333, 0.8667),
    ("Computers", 720, 0.8570, 0.8746, 0.8723),
    ("Earthquakes", 512, 0.7505, 0.7649, 0.7529),
    ("Herring", 512, 0.5989, 0.5625, 0.5677),
    ("RefrigerationDevices", 720, 0.5688, 0.6115, 0.6186),
    ("Yoga", 426, 0.8203, 0.8284, 0.8356),
    ("Lightning2", 637, 0.8087, 0.7814, 0.7486),
    ("InsectWingbeatSound", 600, 0.6683, 0.6896, 0.7000),
]


@pytest.fixture
def resolution_study():
    """(dataset x resolution accuracy matrix, series length per dataset)."""
    matrix = pd.DataFrame(
        [row[2:] for row in RESOLUTION_STUDY],
        index=[row[0] for row in RESOLUTION_STUDY],
        columns=[64, 128, 256],
    )
    lengths = {row[0]: row[1] for row in RESOLUTION_STUDY}
    return matrix, lengths
