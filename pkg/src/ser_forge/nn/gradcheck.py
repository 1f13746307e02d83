"""Finite-difference gradient verification harness.

Casts the parameter store to float64, runs the (deterministic) forward
once for analytic gradients, then central differences on every trainable
scalar (or a seeded subsample for large stores).
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from ..errors import TrainingError
from .params import ParamStore
from .tensor import Tensor


def grad_check(
    model_fn: Callable[[ParamStore], Tensor],
    store: ParamStore,
    eps: float = 1e-5,
    max_scalars_per_param: int | None = None,
    seed: int = 0,
) -> float:
    """Return the worst relative error between analytic and numeric gradients.

    ``model_fn`` maps a ParamStore to a scalar loss Tensor and must be
    deterministic (checked by running it twice).
    """
    store64 = store.astype(np.float64)

    out1 = model_fn(store64)
    out2 = model_fn(store64)
    if float(out1.data) != float(out2.data):
        raise TrainingError("model_fn is not deterministic; disable dropout/patchout first")

    store64.zero_grad()
    loss = model_fn(store64)
    loss.backward()

    rng = np.random.default_rng(seed)
    worst = 0.0
    for name, param in store64.trainable_items():
        grad = param.grad if param.grad is not None else np.zeros_like(param.data)
        flat = param.data.reshape(-1)
        gflat = np.asarray(grad).reshape(-1)
        n = flat.size
        if max_scalars_per_param is not None and n > max_scalars_per_param:
            idx = rng.choice(n, size=max_scalars_per_param, replace=False)
        else:
            idx = np.arange(n)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = float(model_fn(store64).data)
            flat[i] = orig - eps
            f_minus = float(model_fn(store64).data)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2 * eps)
            denom = max(abs(numeric), abs(gflat[i]), 1e-8)
            worst = max(worst, abs(numeric - gflat[i]) / denom)
    return worst


__all__ = ["grad_check", "Tensor"]
