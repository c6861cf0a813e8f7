"""Adam with coupled or decoupled weight decay, and a plateau LR scheduler."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from src.nn.modules import Module, Parameter
from src.nn.tensor import ShapeError

logger = logging.getLogger(__name__)


@dataclass
class ParamStore:
    """Named parameters plus Adam moments and one step counter shared by all of them."""

    params: dict[str, Parameter]
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0

    def __post_init__(self) -> None:
        for name, param in self.params.items():
            self.m.setdefault(name, np.zeros_like(param.data))
            self.v.setdefault(name, np.zeros_like(param.data))

    @classmethod
    def from_module(cls, module: Module) -> ParamStore:
        return cls(params=dict(module.named_parameters()))

    def grads(self) -> dict[str, np.ndarray]:
        """Current ``.grad`` of every parameter, zeros where none was produced."""
        return {
            name: param.grad if param.grad is not None else np.zeros_like(param.data)
            for name, param in self.params.items()
        }


def adam_step(
    store: ParamStore,
    grads: Mapping[str, np.ndarray] | None = None,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 1e-2,
    decoupled: bool = False,
) -> ParamStore:
    """Apply one bias-corrected Adam update in place.

    With ``decoupled=False`` the decay is L2 added to the gradient; with
    ``decoupled=True`` parameters shrink by ``lr * weight_decay`` directly.

    Args:
        store: Parameters and optimizer state; ``store.t`` is incremented.
        grads: Gradient per parameter name; defaults to each parameter's ``.grad``.

    Returns:
        The same store, updated.
    """
    grads = store.grads() if grads is None else grads
    store.t += 1
    t = store.t
    correction1 = 1.0 - beta1**t
    correction2 = 1.0 - beta2**t

    for name, param in store.params.items():
        grad = np.asarray(grads[name])
        if grad.shape != param.shape:
            raise ShapeError(f"{name}: grad {grad.shape} vs param {param.shape}")
        if weight_decay and not decoupled:
            grad = grad + weight_decay * param.data

        m = store.m[name]
        v = store.v[name]
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad * grad

        m_hat = m / correction1
        v_hat = v / correction2
        update = lr * m_hat / (np.sqrt(v_hat) + eps)
        if weight_decay and decoupled:
            update = update + lr * weight_decay * param.data
        param.data = (param.data - update).astype(param.dtype, copy=False)
    return store


class Adam:
    """Stateful wrapper binding a ParamStore to hyperparameters."""

    def __init__(
        self,
        module: Module,
        lr: float = 1e-3,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 1e-2,
        decoupled: bool = False,
    ):
        self.store = ParamStore.from_module(module)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.decoupled = decoupled

    def step(self) -> None:
        adam_step(
            self.store,
            lr=self.lr,
            beta1=self.betas[0],
            beta2=self.betas[1],
            eps=self.eps,
            weight_decay=self.weight_decay,
            decoupled=self.decoupled,
        )

    def zero_grad(self) -> None:
        for param in self.store.params.values():
            param.grad = None


class ReduceLROnPlateau:
    """Multiply the optimizer's lr by ``factor`` after ``patience`` epochs without a new minimum.

    Improvement is strict (min-delta 0). The lr never drops below ``min_lr``.
    """

    def __init__(self, optimizer: Adam, factor: float = 0.5, patience: int = 3, min_lr: float = 1e-5):
        if not 0.0 < factor < 1.0:
            raise ValueError(f"factor must lie in (0, 1), got {factor}")
        self.optimizer = optimizer
        self.factor = factor
        self.patience = patience
        self.min_lr = min_lr
        self.best = float("inf")
        self.bad_epochs = 0

    def step(self, metric: float) -> float:
        if metric < self.best:
            self.best = metric
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1

        if self.bad_epochs >= self.patience:
            new_lr = max(self.optimizer.lr * self.factor, self.min_lr)
            if new_lr < self.optimizer.lr:
                logger.debug("Reducing lr %.3g -> %.3g", self.optimizer.lr, new_lr)
            self.optimizer.lr = new_lr
            self.bad_epochs = 0
        return self.optimizer.lr
