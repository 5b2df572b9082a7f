"""Stochastic gradient descent with classical momentum."""
from __future__ import annotations

from typing import Mapping

import numpy as np

from .tensor import Tensor


class SgdState:
    """Hyperparameters plus one velocity buffer per named parameter."""

    def __init__(self, params: Mapping[str, Tensor], learning_rate: float = 0.01,
                 momentum: float = 0.9):
        if not learning_rate >= 0:
            raise ValueError(f"learning_rate must be non-negative, got {learning_rate}")
        if not 0 <= momentum < 1:
            raise ValueError(f"momentum must lie in [0, 1), got {momentum}")
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.velocity = {name: np.zeros_like(p.data) for name, p in params.items()}


def sgd_step(params: Mapping[str, Tensor], state: SgdState) -> None:
    """In place: ``v = momentum * v + grad``; ``p = p - lr * v``."""
    for name, p in params.items():
        if p.grad is None:
            raise ValueError(f"parameter {name!r} has no gradient")
        v = state.velocity.get(name)
        if v is None or v.shape != p.shape:
            raise ValueError(f"velocity for {name!r} missing or mis-shaped")
        v *= state.momentum
        v += p.grad
        p.data -= state.learning_rate * v


def zero_grad(params: Mapping[str, Tensor]) -> None:
    for p in params.values():
        p.grad = None
