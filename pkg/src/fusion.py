"""Branch fusion (concatenation or softmax-weighted sum) and the classification head."""

from __future__ import annotations

from typing import Literal, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.nn import functional as F
from src.nn.modules import Dropout, Linear, Module, ModuleList, Parameter
from src.nn.tensor import Tensor, concat, stack

SIMPLEX_TOLERANCE = 1e-5


class FusionError(ValueError):
    """Invalid branch set or fusion weights off the probability simplex."""


class FusionConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    strategy: Literal["concat", "weighted"] = "concat"
    common_dim: int = Field(128, ge=1)
    include_numeric: bool = False


def concat_fuse(h_list: Sequence[Tensor]) -> Tensor:
    """Join branch embeddings along the feature axis in the given order."""
    if not h_list:
        raise FusionError("no branch embeddings to fuse")
    if len(h_list) == 1:
        return h_list[0]
    return concat(list(h_list), axis=-1)


def _check_simplex(alpha: np.ndarray) -> None:
    if np.any(alpha < 0) or np.any(alpha > 1):
        raise FusionError("fusion weights left [0, 1]")
    if np.any(np.abs(alpha.sum(axis=-1) - 1.0) > SIMPLEX_TOLERANCE):
        raise FusionError("fusion weights do not sum to 1")


def weighted_fuse(h_list: Sequence[Tensor], w_list: Sequence[Tensor]) -> tuple[Tensor, Tensor]:
    """Convex combination of equal-width embeddings.

    Branch k gets logit ``w_k . h_k``; softmax over branches gives alpha.

    Returns:
        (z, alpha) with z of shape (N, D) and alpha of shape (N, K).
    """
    if not h_list:
        raise FusionError("no branch embeddings to fuse")
    if len(h_list) != len(w_list):
        raise FusionError(f"{len(h_list)} embeddings but {len(w_list)} weight vectors")
    widths = {h.shape[-1] for h in h_list}
    if len(widths) != 1:
        raise FusionError(f"weighted fusion needs equal widths, got {sorted(widths)}")

    logits = concat([(h * w).sum(axis=-1, keepdims=True) for h, w in zip(h_list, w_list)], axis=-1)
    alpha = F.softmax(logits, axis=-1)
    _check_simplex(alpha.data)

    stacked = stack(list(h_list), axis=1)
    n, k = alpha.shape
    z = (stacked * alpha.reshape(n, k, 1)).sum(axis=1)
    return z, alpha


class WeightedFusion(Module):
    """Per-branch projection to ``common_dim`` followed by softmax-weighted summation.

    Attention vectors start at zero, so initial weights are uniform.
    """

    def __init__(self, input_dims: Sequence[int], common_dim: int, rng: np.random.Generator):
        super().__init__()
        if not input_dims:
            raise FusionError("weighted fusion needs at least one branch")
        self.projections = ModuleList(Linear(dim, common_dim, rng) for dim in input_dims)
        self.attention = []
        for index in range(len(input_dims)):
            weight = Parameter(np.zeros(common_dim))
            setattr(self, f"w{index}", weight)
            self.attention.append(weight)
        self.output_dim = common_dim
        self.last_alpha: np.ndarray | None = None

    def forward(self, h_list: Sequence[Tensor]) -> Tensor:
        if len(h_list) != len(self.projections):
            raise FusionError(f"expected {len(self.projections)} branches, got {len(h_list)}")
        projected = [proj(h) for proj, h in zip(self.projections, h_list)]
        z, alpha = weighted_fuse(projected, self.attention)
        self.last_alpha = alpha.data
        return z


class ClassifierHead(Module):
    """``W2 · dropout(relu(W1 z + b1)) + b2``; ``classify`` applies the final softmax."""

    def __init__(
        self,
        input_dim: int,
        n_classes: int,
        rng: np.random.Generator,
        hidden: int = 128,
        dropout: float = 0.5,
    ):
        super().__init__()
        self.fc1 = Linear(input_dim, hidden, rng)
        self.drop = Dropout(dropout, seed=int(rng.integers(2**32)))
        self.fc2 = Linear(hidden, n_classes, rng)
        self.n_classes = n_classes

    def forward(self, z: Tensor) -> Tensor:
        return self.fc2(self.drop(F.relu(self.fc1(z))))

    def classify(self, z: Tensor) -> Tensor:
        return F.softmax(self(z), axis=-1)
