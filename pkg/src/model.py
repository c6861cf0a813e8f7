"""Full classifier: branch encoders, fusion and head for each supported architecture."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from src.config import ModelConfig, RunConfig
from src.encoders import EncoderConfig, build_encoder
from src.fusion import ClassifierHead, FusionError, WeightedFusion, concat_fuse
from src.nn.modules import Module, ModuleList
from src.nn.tensor import Tensor

logger = logging.getLogger(__name__)

NUMERIC_BRANCH = "numeric"


@dataclass
class ModelInputs:
    """One batch: chart tensors (N, 3, R, R) keyed by chart type, and the raw series (N, T)."""

    charts: dict[str, Tensor] = field(default_factory=dict)
    series: Tensor | None = None

    def __len__(self) -> int:
        if self.series is not None:
            return len(self.series)
        return len(next(iter(self.charts.values())))


class ChartClassifier(Module):
    """Encoders in branch order ``[numeric?, chart_1, ..., chart_K]``, then fusion, then head."""

    def __init__(
        self,
        chart_types: tuple[str, ...],
        resolution: int,
        n_classes: int,
        length: int,
        rng: np.random.Generator,
        backbone: str = "deep",
        numeric_encoder: str | None = None,
        fusion: str = "concat",
        model_config: ModelConfig | None = None,
    ):
        super().__init__()
        cfg = model_config or ModelConfig()
        self.branch_names: list[str] = []
        encoders = []

        if numeric_encoder is not None:
            encoders.append(build_encoder(EncoderConfig.from_model_config(numeric_encoder, length, cfg), rng))
            self.branch_names.append(NUMERIC_BRANCH)
        chart_kind = "shallow_cnn" if backbone == "shallow" else "deep_cnn"
        for chart_type in chart_types:
            encoders.append(build_encoder(EncoderConfig.from_model_config(chart_kind, resolution, cfg), rng))
            self.branch_names.append(chart_type)
        if not encoders:
            raise FusionError("a classifier needs at least one branch")

        self.encoders = ModuleList(encoders)
        dims = [encoder.output_dim for encoder in encoders]
        self.fusion_strategy = fusion
        if fusion == "weighted":
            self.fusion = WeightedFusion(dims, cfg.common_dim, rng)
            fused_dim = cfg.common_dim
        elif fusion == "concat":
            fused_dim = sum(dims)
        else:
            raise FusionError(f"unknown fusion strategy {fusion!r}")
        self.head = ClassifierHead(fused_dim, n_classes, rng, hidden=cfg.head_hidden, dropout=cfg.dropout)
        self.n_classes = n_classes

    @property
    def last_alpha(self) -> np.ndarray | None:
        """Fusion weights of the most recent forward pass (weighted fusion only)."""
        if self.fusion_strategy != "weighted":
            return None
        return self.fusion.last_alpha

    def embed(self, inputs: ModelInputs) -> list[Tensor]:
        embeddings = []
        for name, encoder in zip(self.branch_names, self.encoders):
            if name == NUMERIC_BRANCH:
                if inputs.series is None:
                    raise FusionError("numeric branch present but no series given")
                embeddings.append(encoder(inputs.series))
            else:
                if name not in inputs.charts:
                    raise FusionError(f"missing chart input {name!r}")
                embeddings.append(encoder(inputs.charts[name]))
        return embeddings

    def forward(self, inputs: ModelInputs) -> Tensor:
        embeddings = self.embed(inputs)
        if self.fusion_strategy == "weighted":
            z = self.fusion(embeddings)
        else:
            z = concat_fuse(embeddings)
        return self.head(z)


def build_model(
    run: RunConfig,
    n_classes: int,
    length: int,
    model_config: ModelConfig | None = None,
) -> ChartClassifier:
    """Initialize the classifier for one run; weights are a function of ``run.seed``."""
    model = ChartClassifier(
        chart_types=run.chart_types,
        resolution=run.resolution,
        n_classes=n_classes,
        length=length,
        rng=np.random.default_rng(run.seed),
        backbone=run.backbone,
        numeric_encoder=run.numeric_encoder,
        fusion=run.fusion,
        model_config=model_config,
    )
    logger.debug(
        "Built %s (%s) with %d parameters", run.architecture, "/".join(model.branch_names), model.num_parameters()
    )
    return model
