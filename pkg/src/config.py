"""Configuration settings and reference tables for the chart benchmark."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal, NamedTuple

from pydantic import BaseModel, ConfigDict, Field, model_validator
from pydantic_settings import (
    BaseSettings,
    PydanticBaseSettingsSource,
    SettingsConfigDict,
    TomlConfigSettingsSource,
)

PROJECT_ROOT = Path(__file__).parent.parent

ChartType = Literal["line", "area", "bar", "scatter"]
ColorMode = Literal["mono", "color"]
LabelMode = Literal["with_label", "no_label"]
Architecture = Literal["single_chart", "chart_numeric", "multi_chart", "multimodal"]
Backbone = Literal["shallow", "deep"]
FusionStrategy = Literal["concat", "weighted"]
NumericEncoder = Literal["fcn", "transformer", "oscnn"]

CHART_TYPES: tuple[str, ...] = ("line", "area", "bar", "scatter")
COLOR_MODES: tuple[str, ...] = ("mono", "color")
LABEL_MODES: tuple[str, ...] = ("with_label", "no_label")
RESOLUTION_PRESETS: tuple[int, ...] = (64, 128, 256)

# Architectures that carry the raw-series branch
NUMERIC_ARCHITECTURES = {"chart_numeric", "multimodal"}
SINGLE_CHART_ARCHITECTURES = {"single_chart", "chart_numeric"}

# Pooling depth per CNN backbone; resolution must be divisible by 2**depth
BACKBONE_DEPTH = {"shallow": 3, "deep": 5}


class DatasetInfo(NamedTuple):
    domain: str
    data_type: str
    length: int
    n_train: int
    n_test: int
    n_classes: int


# UCR datasets used by the benchmark (archive statistics)
DATASET_CATALOG: dict[str, DatasetInfo] = {
    "Adiac": DatasetInfo("Biology", "Image", 176, 390, 391, 37),
    "ArrowHead": DatasetInfo("Anthropology", "Image", 251, 36, 175, 3),
    "Beef": DatasetInfo("Food Science", "Spectro", 470, 30, 30, 5),
    "BeetleFly": DatasetInfo("Biology", "Image", 512, 20, 20, 2),
    "ChlorineConcentration": DatasetInfo("Chemistry", "Simulation", 166, 467, 3840, 3),
    "Computers": DatasetInfo("Energy", "Device", 720, 250, 250, 2),
    "CricketX": DatasetInfo("Motion", "Human Activity", 300, 390, 390, 12),
    "CricketY": DatasetInfo("Motion", "Human Activity", 300, 390, 390, 12),
    "CricketZ": DatasetInfo("Motion", "Human Activity", 300, 390, 390, 12),
    "Crop": DatasetInfo("Agriculture", "Image", 46, 7200, 16800, 24),
    "ECG5000": DatasetInfo("Healthcare", "Sensor", 140, 500, 4500, 5),
    "Earthquakes": DatasetInfo("Geophysics", "Sensor", 512, 322, 139, 2),
    "FaceAll": DatasetInfo("Biometrics", "Image", 131, 560, 1690, 14),
    "FacesUCR": DatasetInfo("Biometrics", "Image", 131, 200, 2050, 14),
    "FordB": DatasetInfo("Automotive", "Sensor", 500, 3636, 810, 2),
    "GunPoint": DatasetInfo("Gesture", "Human Activity", 150, 50, 150, 2),
    "Ham": DatasetInfo("Food Science", "Spectro", 431, 100, 105, 2),
    "Herring": DatasetInfo("Biology", "Image", 512, 64, 64, 2),
    "InsectWingbeatSound": DatasetInfo("Biology", "Audio", 256, 220, 1980, 10),
    "ItalyPowerDemand": DatasetInfo("Energy", "Sensor", 24, 67, 1029, 2),
    "Lightning2": DatasetInfo("Weather", "Sensor", 637, 60, 61, 2),
    "PhalangesOutlinesCorrect": DatasetInfo("Healthcare", "Image", 80, 1800, 858, 2),
    "RefrigerationDevices": DatasetInfo("Energy", "Device", 720, 375, 375, 3),
    "SonyAIBORobotSurface1": DatasetInfo("Robotics", "Sensor", 70, 20, 601, 2),
    "Strawberry": DatasetInfo("Food Science", "Spectro", 235, 613, 370, 2),
    "ToeSegmentation1": DatasetInfo("Motion", "Motion", 277, 40, 228, 2),
    "ToeSegmentation2": DatasetInfo("Motion", "Motion", 343, 36, 130, 2),
    "Wafer": DatasetInfo("Manufacturing", "Sensor", 152, 1000, 6164, 2),
    "Wine": DatasetInfo("Chemistry", "Spectro", 234, 57, 54, 2),
    "WordSynonyms": DatasetInfo("NLP", "Image", 270, 267, 638, 25),
    "Yoga": DatasetInfo("Motion", "Image", 426, 300, 3000, 2),
}


def length_group(length: int) -> str:
    """Bucket a series length into the short/medium/long groups used by reports."""
    if length < 200:
        return "Short (<200)"
    if length <= 400:
        return "Medium (200-400)"
    return "Long (>400)"


def train_size_group(n_train: int) -> str:
    """Bucket a training-set size; boundaries are a local convention."""
    if n_train <= 100:
        return "Small (<=100)"
    if n_train <= 500:
        return "Medium (101-500)"
    return "Large (>500)"


def task_type(n_classes: int) -> str:
    return "Binary" if n_classes == 2 else "Multiclass"


class ModelConfig(BaseModel):
    """Architecture defaults the benchmark leaves open."""

    model_config = ConfigDict(extra="forbid")

    numeric_output_dim: int = Field(128, ge=1)
    fcn_hidden: int = Field(128, ge=1)
    d_model: int = Field(64, ge=1)
    heads: int = Field(4, ge=1)
    transformer_layers: int = Field(2, ge=1)
    positional_encoding: bool = True
    oscnn_channels: int = Field(32, ge=1)
    oscnn_max_kernel: int = Field(23, ge=1)
    common_dim: int = Field(128, ge=1)
    head_hidden: int = Field(128, ge=1)
    dropout: float = Field(0.5, ge=0.0, lt=1.0)

    @model_validator(mode="after")
    def _heads_divide_d_model(self) -> ModelConfig:
        if self.d_model % self.heads:
            raise ValueError(f"d_model {self.d_model} is not divisible by heads {self.heads}")
        return self


class TrainConfig(BaseModel):
    """Optimizer, scheduler and stopping parameters for one training run."""

    model_config = ConfigDict(extra="forbid")

    lr: float = Field(1e-3, gt=0)
    weight_decay: float = Field(1e-2, ge=0)
    decoupled_weight_decay: bool = False
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    eps: float = Field(1e-8, gt=0)
    patience: int = Field(10, ge=1)  # epochs without a new best validation accuracy
    lr_patience: int = Field(3, ge=1)  # epochs without validation-loss improvement
    lr_factor: float = Field(0.5, gt=0, lt=1)
    min_lr: float = Field(1e-5, ge=0)
    max_epochs: int = Field(200, ge=1)
    batch_size: int = Field(32, ge=1)
    eval_batch_size: int = Field(64, ge=1)


class RunConfig(BaseModel):
    """One fully bound experiment cell plus its seed."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    dataset: str
    architecture: Architecture = "single_chart"
    chart_types: tuple[ChartType, ...] = ("line",)
    color_mode: ColorMode = "mono"
    label_mode: LabelMode = "no_label"
    resolution: int = Field(128, ge=16)
    backbone: Backbone = "deep"
    fusion: FusionStrategy = "concat"
    numeric_encoder: NumericEncoder | None = None
    seed: int = 0

    @model_validator(mode="after")
    def _check_coherence(self) -> RunConfig:
        if len(set(self.chart_types)) != len(self.chart_types):
            raise ValueError(f"duplicate chart types: {self.chart_types}")
        if self.architecture in SINGLE_CHART_ARCHITECTURES and len(self.chart_types) != 1:
            raise ValueError(f"{self.architecture} takes exactly one chart type")
        if self.architecture not in SINGLE_CHART_ARCHITECTURES and len(self.chart_types) < 2:
            raise ValueError(f"{self.architecture} needs at least two chart types")
        uses_numeric = self.architecture in NUMERIC_ARCHITECTURES
        if uses_numeric and self.numeric_encoder is None:
            raise ValueError(f"{self.architecture} requires numeric_encoder")
        if not uses_numeric and self.numeric_encoder is not None:
            raise ValueError(f"{self.architecture} takes no numeric_encoder")
        step = 2 ** BACKBONE_DEPTH[self.backbone]
        if self.resolution % step:
            raise ValueError(
                f"resolution {self.resolution} is not divisible by {step} ({self.backbone} backbone)"
            )
        return self

    @property
    def uses_numeric(self) -> bool:
        return self.architecture in NUMERIC_ARCHITECTURES

    @property
    def run_id(self) -> str:
        """Stable identifier: a hash of the canonical JSON form of the config."""
        payload = json.dumps(self.model_dump(mode="json"), sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]

    @property
    def setting_label(self) -> str:
        """Short rendering-setting label, e.g. ``Color-NL``."""
        color = "Color" if self.color_mode == "color" else "Mono"
        label = "L" if self.label_mode == "with_label" else "NL"
        return f"{color}-{label}"


class SweepConfig(BaseModel):
    """Axes of an ablation grid. Every axis must be non-empty."""

    model_config = ConfigDict(extra="forbid")

    datasets: list[str] = Field(min_length=1)
    chart_types: list[ChartType] = Field(default_factory=lambda: list(CHART_TYPES), min_length=1)
    color_modes: list[ColorMode] = Field(default_factory=lambda: list(COLOR_MODES), min_length=1)
    label_modes: list[LabelMode] = Field(default_factory=lambda: list(LABEL_MODES), min_length=1)
    resolutions: list[int] = Field(default_factory=lambda: [128], min_length=1)
    architectures: list[Architecture] = Field(default_factory=lambda: ["single_chart"], min_length=1)
    fusion_strategies: list[FusionStrategy] = Field(
        default_factory=lambda: ["concat", "weighted"], min_length=1
    )
    numeric_encoders: list[NumericEncoder] = Field(
        default_factory=lambda: ["transformer", "oscnn"], min_length=1
    )
    backbones: list[Backbone] = Field(default_factory=lambda: ["deep"], min_length=1)
    repeats: int | None = Field(None, ge=1)  # None: 10 for single_chart, 3 otherwise
    base_seed: int = 0


class AppConfig(BaseSettings):
    """Application settings: flags > environment (VTB_*) > TOML file > defaults."""

    data_root: Path | None = None
    cache_dir: Path = PROJECT_ROOT / "data" / "charts"
    results_path: Path = PROJECT_ROOT / "data" / "results" / "results.jsonl"
    checkpoint_dir: Path = PROJECT_ROOT / "data" / "checkpoints"
    save_checkpoints: bool = False

    val_fraction: float = Field(0.2, gt=0, lt=1)
    split_seed: int = 0
    delta_threshold: float = Field(0.03, ge=0)
    workers: int = Field(1, ge=1)
    log_level: str = "INFO"

    run: RunConfig | None = None
    sweep: SweepConfig | None = None
    train: TrainConfig = Field(default_factory=TrainConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)

    model_config = SettingsConfigDict(
        env_prefix="VTB_",
        env_nested_delimiter="__",
        extra="forbid",
    )

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> tuple[PydanticBaseSettingsSource, ...]:
        return (init_settings, env_settings, TomlConfigSettingsSource(settings_cls))

    def require_data_root(self) -> Path:
        if self.data_root is None:
            raise ValueError("data_root is not set (use --data-root or VTB_DATA_ROOT)")
        if not self.data_root.is_dir():
            raise FileNotFoundError(f"Data root not found: {self.data_root}")
        return self.data_root


def load_app_config(config_file: str | Path | None = None, **overrides) -> AppConfig:
    """Build settings from an optional TOML file plus explicit overrides.

    Args:
        config_file: Optional path to a TOML file with the AppConfig key schema.
        **overrides: Values that win over environment and file (CLI flags).

    Returns:
        Validated AppConfig.
    """
    if config_file is None:
        return AppConfig(**overrides)

    path = Path(config_file)
    if not path.exists():
        raise FileNotFoundError(f"Config file not found: {path}")

    class FileBackedConfig(AppConfig):
        model_config = SettingsConfigDict(toml_file=path)

    return FileBackedConfig(**overrides)
