"""Finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np

from src.nn.functional import kink_trace
from src.nn.tensor import Tensor


def grad_check(
    fn: Callable[[Tensor], Tensor],
    x: np.ndarray,
    eps: float = 1e-3,
    wrt: list[Tensor] | None = None,
    max_coords: int = 64,
    seed: int = 0,
) -> float:
    """Largest relative error between analytic and central-difference gradients.

    The output of ``fn`` is reduced to a scalar through a fixed random
    projection. Coordinates whose +/- eps perturbation changes any relu or
    maxpool branch choice are skipped, as the function is not differentiable
    there. Run in float64 for meaningful results.

    Args:
        fn: Maps the input tensor to any output tensor.
        x: Input array; its dtype is kept.
        eps: Finite-difference step.
        wrt: Extra leaf tensors (e.g. parameters) to check besides the input.
        max_coords: Coordinates sampled per checked tensor.
        seed: Seeds the projection and the coordinate sample.

    Returns:
        max |a - n| / max(|a|, |n|, 1e-3) over the checked coordinates.
    """
    rng = np.random.default_rng(seed)
    x = np.array(x, copy=True)
    inp = Tensor(x, requires_grad=True, dtype=x.dtype)

    with kink_trace() as base_kinks:
        out = fn(inp)
    base_pattern = list(base_kinks)
    projection = rng.standard_normal(out.shape).astype(out.dtype)

    def scalar_loss() -> tuple[float, list[int]]:
        with kink_trace() as kinks:
            value = fn(inp)
        return float(np.sum(value.data * projection)), list(kinks)

    targets = [inp, *(wrt or [])]
    for target in targets:
        target.grad = None
    out.backward(projection)
    analytic = [np.array(t.grad if t.grad is not None else np.zeros_like(t.data)) for t in targets]

    worst = 0.0
    for target, grad in zip(targets, analytic):
        flat = target.data.reshape(-1)
        count = min(max_coords, flat.size)
        coords = rng.choice(flat.size, size=count, replace=False)
        for index in coords:
            original = flat[index]
            flat[index] = original + eps
            plus, plus_kinks = scalar_loss()
            flat[index] = original - eps
            minus, minus_kinks = scalar_loss()
            flat[index] = original
            if plus_kinks != base_pattern or minus_kinks != base_pattern:
                continue
            numeric = (plus - minus) / (2 * eps)
            exact = float(grad.reshape(-1)[index])
            error = abs(exact - numeric) / max(abs(exact), abs(numeric), 1e-3)
            worst = max(worst, error)
    return worst
