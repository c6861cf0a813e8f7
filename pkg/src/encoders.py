"""Branch encoders: chart-image CNNs and raw-series encoders."""

from __future__ import annotations

import math
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.config import BACKBONE_DEPTH, ModelConfig
from src.nn import functional as F
from src.nn.modules import (
    BatchNorm,
    Conv1d,
    Conv2d,
    Dropout,
    Linear,
    Module,
    ModuleList,
    TransformerEncoderLayer,
)
from src.nn.tensor import ShapeError, Tensor, concat

EncoderKind = Literal["shallow_cnn", "deep_cnn", "fcn", "transformer", "oscnn"]

CNN_FILTERS = (16, 32, 64, 128, 256)
SHALLOW_EMBEDDING = 64
DEEP_HIDDEN = 512
DEEP_EMBEDDING = 256


class EncoderConfig(BaseModel):
    """One branch encoder. ``input_size`` is the resolution R for CNNs, T otherwise."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: EncoderKind
    input_size: int = Field(ge=1)
    numeric_output_dim: int = Field(128, ge=1)
    dropout: float = Field(0.5, ge=0.0, lt=1.0)
    fcn_hidden: int = Field(128, ge=1)
    d_model: int = Field(64, ge=1)
    heads: int = Field(4, ge=1)
    transformer_layers: int = Field(2, ge=1)
    positional_encoding: bool = True
    oscnn_channels: int = Field(32, ge=1)
    oscnn_max_kernel: int = Field(23, ge=1)

    @model_validator(mode="after")
    def _check_input(self) -> EncoderConfig:
        if self.kind in ("shallow_cnn", "deep_cnn"):
            depth = BACKBONE_DEPTH["shallow" if self.kind == "shallow_cnn" else "deep"]
            if self.input_size % 2**depth:
                raise ValueError(
                    f"{self.kind} needs a resolution divisible by {2**depth}, got {self.input_size}"
                )
        if self.kind == "transformer" and self.d_model % self.heads:
            raise ValueError(f"d_model {self.d_model} is not divisible by heads {self.heads}")
        return self

    @property
    def output_dim(self) -> int:
        if self.kind == "shallow_cnn":
            return SHALLOW_EMBEDDING
        if self.kind == "deep_cnn":
            return DEEP_EMBEDDING
        return self.numeric_output_dim

    @classmethod
    def from_model_config(cls, kind: EncoderKind, input_size: int, model: ModelConfig) -> EncoderConfig:
        return cls(
            kind=kind,
            input_size=input_size,
            numeric_output_dim=model.numeric_output_dim,
            dropout=model.dropout,
            fcn_hidden=model.fcn_hidden,
            d_model=model.d_model,
            heads=model.heads,
            transformer_layers=model.transformer_layers,
            positional_encoding=model.positional_encoding,
            oscnn_channels=model.oscnn_channels,
            oscnn_max_kernel=model.oscnn_max_kernel,
        )


def _child_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(2**32))


# ---- chart encoders ----------------------------------------------------------


class ConvBlock(Module):
    """conv3x3 (stride 1, pad 1) -> batch norm -> relu -> 2x2 max pool."""

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator):
        super().__init__()
        self.conv = Conv2d(in_channels, out_channels, 3, rng, stride=1, pad=1)
        self.norm = BatchNorm(out_channels)

    def forward(self, x: Tensor) -> Tensor:
        return F.maxpool2(F.relu(self.norm(self.conv(x))))


class _ChartCNN(Module):
    depth: int

    def __init__(self, resolution: int, rng: np.random.Generator):
        super().__init__()
        step = 2**self.depth
        if resolution % step:
            raise ShapeError(f"resolution {resolution} is not divisible by {step}")
        self.resolution = resolution
        channels = (3, *CNN_FILTERS[: self.depth])
        self.blocks = ModuleList(ConvBlock(cin, cout, rng) for cin, cout in zip(channels, channels[1:]))

    @property
    def feature_shape(self) -> tuple[int, int, int]:
        side = self.resolution // 2**self.depth
        return CNN_FILTERS[self.depth - 1], side, side

    @property
    def flat_features(self) -> int:
        return math.prod(self.feature_shape)

    def features(self, image: Tensor) -> Tensor:
        if image.ndim != 4 or image.shape[1:] != (3, self.resolution, self.resolution):
            raise ShapeError(f"expected (N, 3, {self.resolution}, {self.resolution}), got {image.shape}")
        for block in self.blocks:
            image = block(image)
        return image


class ShallowCNN(_ChartCNN):
    """Three conv blocks (16, 32, 64 filters) and a 64-d projection."""

    depth = 3

    def __init__(self, resolution: int, rng: np.random.Generator, dropout: float = 0.5):
        super().__init__(resolution, rng)
        self.fc = Linear(self.flat_features, SHALLOW_EMBEDDING, rng)
        self.drop = Dropout(dropout, seed=_child_seed(rng))
        self.output_dim = SHALLOW_EMBEDDING

    def forward(self, image: Tensor) -> Tensor:
        return self.drop(F.relu(self.fc(F.flatten(self.features(image)))))


class DeepCNN(_ChartCNN):
    """Five conv blocks (16..256 filters) and a 512 -> 256 head."""

    depth = 5

    def __init__(self, resolution: int, rng: np.random.Generator, dropout: float = 0.5):
        super().__init__(resolution, rng)
        self.fc1 = Linear(self.flat_features, DEEP_HIDDEN, rng)
        self.drop1 = Dropout(dropout, seed=_child_seed(rng))
        self.fc2 = Linear(DEEP_HIDDEN, DEEP_EMBEDDING, rng)
        self.drop2 = Dropout(dropout, seed=_child_seed(rng))
        self.output_dim = DEEP_EMBEDDING

    def forward(self, image: Tensor) -> Tensor:
        x = self.drop1(F.relu(self.fc1(F.flatten(self.features(image)))))
        return self.drop2(F.relu(self.fc2(x)))


# ---- numeric encoders --------------------------------------------------------


def _as_series_batch(series: Tensor) -> Tensor:
    if series.ndim == 1:
        return series.reshape(1, -1)
    if series.ndim != 2:
        raise ShapeError(f"expected (N, T) series, got {series.shape}")
    return series


class FCNEncoder(Module):
    """Two-layer perceptron over the raw series."""

    def __init__(self, length: int, rng: np.random.Generator, hidden: int = 128, output_dim: int = 128):
        super().__init__()
        self.length = length
        self.fc1 = Linear(length, hidden, rng)
        self.fc2 = Linear(hidden, output_dim, rng)
        self.output_dim = output_dim

    def forward(self, series: Tensor) -> Tensor:
        series = _as_series_batch(series)
        if series.shape[1] != self.length:
            raise ShapeError(f"FCN built for T={self.length}, got T={series.shape[1]}")
        return F.relu(self.fc2(F.relu(self.fc1(series))))


def sinusoidal_encoding(length: int, d_model: int) -> np.ndarray:
    """(T, d_model) table: sin on even columns, cos on odd columns."""
    position = np.arange(length)[:, None]
    rate = np.exp(-math.log(10000.0) * (np.arange(0, d_model, 2) / d_model))
    table = np.zeros((length, d_model))
    table[:, 0::2] = np.sin(position * rate)
    table[:, 1::2] = np.cos(position * rate[: d_model // 2])
    return table


class TransformerEncoder(Module):
    """Scalar-per-step embedding, optional positional encoding, encoder blocks, mean pool."""

    def __init__(
        self,
        rng: np.random.Generator,
        output_dim: int = 128,
        d_model: int = 64,
        heads: int = 4,
        layers: int = 2,
        positional_encoding: bool = True,
    ):
        super().__init__()
        self.embed = Linear(1, d_model, rng)
        self.layers = ModuleList(TransformerEncoderLayer(d_model, heads, rng) for _ in range(layers))
        self.proj = Linear(d_model, output_dim, rng)
        self.d_model = d_model
        self.positional_encoding = positional_encoding
        self.output_dim = output_dim

    def forward(self, series: Tensor) -> Tensor:
        series = _as_series_batch(series)
        n, length = series.shape
        x = self.embed(series.reshape(n, length, 1))
        if self.positional_encoding:
            x = x + Tensor(sinusoidal_encoding(length, self.d_model), dtype=x.dtype)
        for layer in self.layers:
            x = layer(x)
        return self.proj(x.mean(axis=1))


def oscnn_kernel_sizes(length: int, max_kernel: int = 23) -> list[int]:
    """1 followed by every prime up to min(length, max_kernel)."""
    if length < 1:
        raise ShapeError(f"series length must be >= 1, got {length}")
    limit = min(length, max_kernel)
    primes = [k for k in range(2, limit + 1) if all(k % d for d in range(2, math.isqrt(k) + 1))]
    return [1, *primes]


class OmniScaleLayer(Module):
    """Parallel same-length 1-D convolutions, one per kernel size, channel-concatenated."""

    def __init__(self, in_channels: int, channels: int, kernel_sizes: list[int], rng: np.random.Generator):
        super().__init__()
        self.convs = ModuleList(Conv1d(in_channels, channels, k, rng, padding="edge") for k in kernel_sizes)
        self.norms = ModuleList(BatchNorm(channels) for _ in kernel_sizes)
        self.out_channels = channels * len(kernel_sizes)

    def forward(self, x: Tensor) -> Tensor:
        return concat([F.relu(norm(conv(x))) for conv, norm in zip(self.convs, self.norms)], axis=1)


class OSCNNEncoder(Module):
    """Two omni-scale stacks, global average pooling over time, linear projection."""

    def __init__(
        self,
        length: int,
        rng: np.random.Generator,
        output_dim: int = 128,
        channels: int = 32,
        max_kernel: int = 23,
    ):
        super().__init__()
        self.kernel_sizes = oscnn_kernel_sizes(length, max_kernel)
        self.stack1 = OmniScaleLayer(1, channels, self.kernel_sizes, rng)
        self.stack2 = OmniScaleLayer(self.stack1.out_channels, channels, self.kernel_sizes, rng)
        self.proj = Linear(self.stack2.out_channels, output_dim, rng)
        self.output_dim = output_dim

    def forward(self, series: Tensor) -> Tensor:
        series = _as_series_batch(series)
        n, length = series.shape
        x = self.stack2(self.stack1(series.reshape(n, 1, length)))
        return self.proj(F.global_avg_pool(x))


def build_encoder(config: EncoderConfig, rng: np.random.Generator) -> Module:
    """Instantiate the encoder an EncoderConfig describes."""
    match config.kind:
        case "shallow_cnn":
            return ShallowCNN(config.input_size, rng, dropout=config.dropout)
        case "deep_cnn":
            return DeepCNN(config.input_size, rng, dropout=config.dropout)
        case "fcn":
            return FCNEncoder(config.input_size, rng, config.fcn_hidden, config.numeric_output_dim)
        case "transformer":
            return TransformerEncoder(
                rng,
                output_dim=config.numeric_output_dim,
                d_model=config.d_model,
                heads=config.heads,
                layers=config.transformer_layers,
                positional_encoding=config.positional_encoding,
            )
        case "oscnn":
            return OSCNNEncoder(
                config.input_size,
                rng,
                output_dim=config.numeric_output_dim,
                channels=config.oscnn_channels,
                max_kernel=config.oscnn_max_kernel,
            )
    raise ValueError(f"unknown encoder kind {config.kind!r}")
