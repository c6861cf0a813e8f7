"""Parameterized layers built on the functional kernels."""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from src.nn import functional as F
from src.nn.tensor import ShapeError, Tensor, matmul


class Parameter(Tensor):
    """A trainable leaf tensor."""

    __slots__ = ()

    def __init__(self, data, dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype or np.float32)


def kaiming_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


class Module:
    """Base class: registers parameters, buffers and child modules by attribute name."""

    def __init__(self) -> None:
        object.__setattr__(self, "_parameters", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "_modules", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, name: str, value) -> None:
        if isinstance(value, Parameter):
            self._parameters[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name: str, value: np.ndarray) -> None:
        self._buffers[name] = value
        object.__setattr__(self, name, value)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    # ---- traversal ---------------------------------------------------------

    def named_modules(self, prefix: str = "") -> Iterator[tuple[str, Module]]:
        yield prefix, self
        for name, child in self._modules.items():
            yield from child.named_modules(f"{prefix}.{name}" if prefix else name)

    def named_parameters(self) -> Iterator[tuple[str, Parameter]]:
        for path, module in self.named_modules():
            for name, param in module._parameters.items():
                yield (f"{path}.{name}" if path else name), param

    def named_buffers(self) -> Iterator[tuple[str, np.ndarray]]:
        for path, module in self.named_modules():
            for name, buffer in module._buffers.items():
                yield (f"{path}.{name}" if path else name), buffer

    def parameters(self) -> list[Parameter]:
        return [param for _, param in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(param.data.size for param in self.parameters())

    # ---- mode and state ----------------------------------------------------

    def train(self, mode: bool = True) -> Module:
        for _, module in self.named_modules():
            object.__setattr__(module, "training", mode)
        return self

    def eval(self) -> Module:
        return self.train(False)

    def zero_grad(self) -> None:
        for param in self.parameters():
            param.grad = None

    def to_dtype(self, dtype) -> Module:
        """Cast every float parameter and buffer in place (e.g. float64 for gradient checks)."""
        for _, module in self.named_modules():
            for param in module._parameters.values():
                param.data = param.data.astype(dtype)
                param.grad = None
            for name, buffer in list(module._buffers.items()):
                if np.issubdtype(buffer.dtype, np.floating):
                    module.register_buffer(name, buffer.astype(dtype))
        return self

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {name: param.data.copy() for name, param in self.named_parameters()}
        state.update({name: np.array(buffer, copy=True) for name, buffer in self.named_buffers()})
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        """Copy values in by name; names and shapes must match exactly."""
        expected = {name for name, _ in self.named_parameters()} | {
            name for name, _ in self.named_buffers()
        }
        missing, unexpected = expected - set(state), set(state) - expected
        if missing or unexpected:
            raise ShapeError(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(unexpected)}")

        for name, param in self.named_parameters():
            value = np.asarray(state[name])
            if value.shape != param.shape:
                raise ShapeError(f"{name}: expected {param.shape}, got {value.shape}")
            param.data = value.astype(param.dtype, copy=True)
        for path, module in self.named_modules():
            for name, buffer in list(module._buffers.items()):
                key = f"{path}.{name}" if path else name
                value = np.asarray(state[key])
                if value.shape != buffer.shape:
                    raise ShapeError(f"{key}: expected {buffer.shape}, got {value.shape}")
                module.register_buffer(name, value.astype(buffer.dtype, copy=True))


class ModuleList(Module):
    def __init__(self, modules=()):
        super().__init__()
        self._items: list[Module] = []
        for module in modules:
            self.append(module)

    def append(self, module: Module) -> None:
        setattr(self, str(len(self._items)), module)
        self._items.append(module)

    def __iter__(self) -> Iterator[Module]:
        return iter(self._items)

    def __len__(self) -> int:
        return len(self._items)

    def __getitem__(self, index: int) -> Module:
        return self._items[index]


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator):
        super().__init__()
        self.weight = Parameter(kaiming_uniform(rng, (out_features, in_features), in_features))
        self.bias = Parameter(np.zeros(out_features))

    def forward(self, x: Tensor) -> Tensor:
        return F.linear(x, self.weight, self.bias)


class Conv2d(Module):
    """3x3-style convolution with square kernel, stride and zero padding."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        rng: np.random.Generator,
        stride: int = 1,
        pad: int = 0,
    ):
        super().__init__()
        fan_in = in_channels * kernel_size * kernel_size
        shape = (out_channels, in_channels, kernel_size, kernel_size)
        self.weight = Parameter(kaiming_uniform(rng, shape, fan_in))
        self.bias = Parameter(np.zeros(out_channels))
        self.stride = stride
        self.pad = pad

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.weight, self.bias, stride=self.stride, pad=self.pad)


class Conv1d(Module):
    """1-D convolution with "same" output length via zero or edge padding.

    Even kernels put the extra padded sample on the right.
    """

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        rng: np.random.Generator,
        padding: F.PadMode = "edge",
    ):
        super().__init__()
        self.weight = Parameter(
            kaiming_uniform(rng, (out_channels, in_channels, kernel_size), in_channels * kernel_size)
        )
        self.bias = Parameter(np.zeros(out_channels))
        self.kernel_size = kernel_size
        self.padding = padding

    def forward(self, x: Tensor) -> Tensor:
        k = self.kernel_size
        padded = F.pad1d(x, (k - 1) // 2, k // 2, self.padding)
        return F.conv1d(padded, self.weight, self.bias)


class BatchNorm(Module):
    """Batch normalization over axis 1 of 2-D, 3-D or 4-D inputs."""

    def __init__(self, channels: int, momentum: float = F.BN_MOMENTUM, eps: float = F.BN_EPS):
        super().__init__()
        self.gamma = Parameter(np.ones(channels))
        self.beta = Parameter(np.zeros(channels))
        self.register_buffer("running_mean", np.zeros(channels, dtype=np.float32))
        self.register_buffer("running_var", np.ones(channels, dtype=np.float32))
        self.register_buffer("num_batches_tracked", np.zeros((), dtype=np.int64))
        self.momentum = momentum
        self.eps = eps

    @property
    def calibrated(self) -> bool:
        return int(self.num_batches_tracked) > 0

    def forward(self, x: Tensor) -> Tensor:
        out = F.batch_norm(
            x,
            self.gamma,
            self.beta,
            self.running_mean,
            self.running_var,
            training=self.training,
            calibrated=self.calibrated,
            momentum=self.momentum,
            eps=self.eps,
        )
        if self.training:
            self.num_batches_tracked += 1
        return out


class LayerNorm(Module):
    def __init__(self, width: int, eps: float = F.BN_EPS):
        super().__init__()
        self.gamma = Parameter(np.ones(width))
        self.beta = Parameter(np.zeros(width))
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return F.layer_norm(x, self.gamma, self.beta, self.eps)


class Dropout(Module):
    def __init__(self, p: float, seed: int | None = 0):
        super().__init__()
        self.p = p
        self.rng = np.random.default_rng(seed)

    def forward(self, x: Tensor) -> Tensor:
        return F.dropout(x, self.p, self.rng, self.training)


class ReLU(Module):
    def forward(self, x: Tensor) -> Tensor:
        return F.relu(x)


class Sequential(ModuleList):
    def forward(self, x: Tensor) -> Tensor:
        for module in self:
            x = module(x)
        return x


class MultiHeadSelfAttention(Module):
    """Scaled dot-product self-attention over (N, T, D) with ``heads`` heads."""

    def __init__(self, d_model: int, heads: int, rng: np.random.Generator):
        super().__init__()
        if d_model % heads:
            raise ValueError(f"d_model {d_model} is not divisible by heads {heads}")
        self.heads = heads
        self.head_dim = d_model // heads
        self.query = Linear(d_model, d_model, rng)
        self.key = Linear(d_model, d_model, rng)
        self.value = Linear(d_model, d_model, rng)
        self.out = Linear(d_model, d_model, rng)
        self.last_attention: np.ndarray | None = None

    def _split(self, x: Tensor) -> Tensor:
        n, t, _ = x.shape
        return x.reshape(n, t, self.heads, self.head_dim).transpose(0, 2, 1, 3)

    def forward(self, x: Tensor) -> Tensor:
        n, t, d = x.shape
        q, k, v = self._split(self.query(x)), self._split(self.key(x)), self._split(self.value(x))
        scores = F.scale(matmul(q, k.transpose(0, 1, 3, 2)), 1.0 / math.sqrt(self.head_dim))
        weights = F.softmax(scores, axis=-1)
        self.last_attention = weights.data
        context = matmul(weights, v).transpose(0, 2, 1, 3).reshape(n, t, d)
        return self.out(context)


class TransformerEncoderLayer(Module):
    """Pre-norm encoder block: x + MHSA(LN(x)), then x + FFN(LN(x)) with hidden width 4D."""

    def __init__(self, d_model: int, heads: int, rng: np.random.Generator):
        super().__init__()
        self.norm1 = LayerNorm(d_model)
        self.attention = MultiHeadSelfAttention(d_model, heads, rng)
        self.norm2 = LayerNorm(d_model)
        self.ff1 = Linear(d_model, 4 * d_model, rng)
        self.ff2 = Linear(4 * d_model, d_model, rng)

    def forward(self, x: Tensor) -> Tensor:
        x = x + self.attention(self.norm1(x))
        return x + self.ff2(F.relu(self.ff1(self.norm2(x))))


def mhsa_layer(x: Tensor, heads: int, seed: int = 0) -> Tensor:
    """Apply one freshly initialized encoder block to (N, T, D)."""
    if x.ndim != 3:
        raise ShapeError(f"mhsa_layer expects (N, T, D), got {x.shape}")
    layer = TransformerEncoderLayer(x.shape[2], heads, np.random.default_rng(seed))
    return layer(x)


__all__ = [
    "BatchNorm",
    "Conv1d",
    "Conv2d",
    "Dropout",
    "LayerNorm",
    "Linear",
    "Module",
    "ModuleList",
    "MultiHeadSelfAttention",
    "Parameter",
    "ReLU",
    "Sequential",
    "TransformerEncoderLayer",
    "kaiming_uniform",
    "mhsa_layer",
]
