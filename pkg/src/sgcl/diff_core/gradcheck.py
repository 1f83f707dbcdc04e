from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from sgcl.diff_core.tensor import Tensor

STEP = 1e-5
# Denominator floor so that gradients close to zero are compared absolutely.
SCALE_FLOOR = 1e-3


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_input: int
    worst_index: tuple[int, ...]
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tol


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), SCALE_FLOOR)
    return np.abs(analytic - numeric) / scale


def numeric_gradient(f: Callable[[], Tensor], x: Tensor, h: float = STEP) -> np.ndarray:
    if not x.data.flags.c_contiguous:
        x.data = np.ascontiguousarray(x.data)
    grad = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f().item()
        flat[i] = orig - h
        down = f().item()
        flat[i] = orig
        out[i] = (up - down) / (2.0 * h)
    return grad


def analytic_gradients(f: Callable[[], Tensor], inputs: Sequence[Tensor]) -> list[np.ndarray]:
    for x in inputs:
        x.grad = None
    f().backward()
    return [np.zeros_like(x.data) if x.grad is None else x.grad.copy() for x in inputs]


def grad_check(
    f: Callable[[], Tensor],
    inputs: Sequence[Tensor],
    tol: float = 1e-4,
    analytic: Sequence[np.ndarray] | None = None,
) -> GradCheckReport:
    """Compare reverse-mode gradients of scalar ``f()`` with central differences.

    ``f`` is re-evaluated with each input entry perturbed in place, so it
    must read the input tensors' current values on every call. Passing
    ``analytic`` overrides the backward pass (used for negative controls).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    grads = list(analytic) if analytic is not None else analytic_gradients(f, inputs)
    worst = (0.0, 0, ())
    for k, (x, g) in enumerate(zip(inputs, grads)):
        num = numeric_gradient(f, x)
        err = relative_error(g, num)
        if err.size and err.max() > worst[0]:
            worst = (float(err.max()), k, np.unravel_index(int(err.argmax()), err.shape))
    for x in inputs:
        x.grad = None
    return GradCheckReport(worst[0], worst[1], tuple(int(i) for i in worst[2]), tol)
