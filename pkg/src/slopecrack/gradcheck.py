"""Central finite-difference gradient checking."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, backward


def numerical_grad(f: Callable[[], float], arr: np.ndarray, step: float = 1e-4) -> np.ndarray:
    """d f / d arr by central differences; ``arr`` is perturbed in place and restored."""
    grad = np.zeros_like(arr)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = f()
        flat[i] = orig - step
        lo = f()
        flat[i] = orig
        gflat[i] = (hi - lo) / (2 * step)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max absolute deviation scaled by the larger gradient magnitude.

    Gradients that vanish identically (both sides below ``1e-6``) are compared
    on an absolute scale instead.
    """
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), 1e-6)
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)


def check_gradients(fn: Callable[..., Tensor], inputs: Sequence[Tensor], seed: int = 0,
                    step: float = 1e-4) -> list[float]:
    """Compare backprop against finite differences for every input requiring grad.

    The output of ``fn`` is contracted with a fixed random tensor so every
    output element contributes to the scalar being differentiated.
    """
    out = fn(*inputs)
    proj = np.random.default_rng(seed).standard_normal(out.shape)

    def scalar() -> float:
        return float((fn(*inputs).data * proj).sum())

    for t in inputs:
        t.grad = None
    loss = (out * Tensor(proj)).sum()
    backward(loss)
    errors = []
    for t in inputs:
        if not t.requires_grad:
            continue
        numeric = numerical_grad(scalar, t.data, step)
        errors.append(relative_error(t.grad, numeric))
    return errors
