"""Adam optimizer with bias correction, gradient clipping, cosine schedule."""

from __future__ import annotations

import math

import numpy as np

from ..errors import TrainingError
from .params import ParamStore


class AdamState:
    """Per-parameter first/second moment estimates plus the step counter."""

    def __init__(self, store: ParamStore):
        self.m = {n: np.zeros_like(t.data, dtype=np.float32) for n, t in store.items()}
        self.v = {n: np.zeros_like(t.data, dtype=np.float32) for n, t in store.items()}
        self.t = 0


def adam_step(
    store: ParamStore,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
):
    """Bias-corrected Adam update on trainable parameters only."""
    state.t += 1
    t = state.t
    for name, param in store.trainable_items():
        if param.grad is None:
            raise TrainingError(f"trainable parameter {name!r} has no gradient")
        g = param.grad
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * np.square(g)
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        param.data = param.data - lr * m_hat / (np.sqrt(v_hat) + eps)


def clip_grad_norm(store: ParamStore, max_norm: float) -> float:
    """Scale all trainable gradients so their global L2 norm <= max_norm."""
    total = 0.0
    for _, param in store.trainable_items():
        if param.grad is not None:
            total += float(np.sum(np.square(param.grad, dtype=np.float64)))
    norm = math.sqrt(total)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for _, param in store.trainable_items():
            if param.grad is not None:
                param.grad = param.grad * scale
    return norm


def cosine_lr(step: int, total_steps: int, lr0: float) -> float:
    """lr0 * (1 + cos(pi * step / total_steps)) / 2."""
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    return lr0 * (1.0 + math.cos(math.pi * step / total_steps)) / 2.0
