"""Small numpy tensor engine: autodiff, layers, Adam and checkpoints."""

from src.nn import functional
from src.nn.checkpoint import load_checkpoint, save_checkpoint, state_hash
from src.nn.gradcheck import grad_check
from src.nn.modules import (
    BatchNorm,
    Conv1d,
    Conv2d,
    Dropout,
    LayerNorm,
    Linear,
    Module,
    ModuleList,
    MultiHeadSelfAttention,
    Parameter,
    ReLU,
    Sequential,
    TransformerEncoderLayer,
    mhsa_layer,
)
from src.nn.optim import Adam, ParamStore, ReduceLROnPlateau, adam_step
from src.nn.tensor import NotCalibratedError, ShapeError, Tensor, concat, no_grad, stack

__all__ = [
    "Adam",
    "BatchNorm",
    "Conv1d",
    "Conv2d",
    "Dropout",
    "LayerNorm",
    "Linear",
    "Module",
    "ModuleList",
    "MultiHeadSelfAttention",
    "NotCalibratedError",
    "ParamStore",
    "Parameter",
    "ReLU",
    "ReduceLROnPlateau",
    "Sequential",
    "ShapeError",
    "Tensor",
    "TransformerEncoderLayer",
    "adam_step",
    "concat",
    "functional",
    "grad_check",
    "load_checkpoint",
    "mhsa_layer",
    "no_grad",
    "save_checkpoint",
    "stack",
    "state_hash",
]
