"""Cross-entropy loss with plain-mean and macro (per-class mean) reduction."""

from __future__ import annotations

import numpy as np

from ..errors import LabelError
from .tensor import Tensor, log_softmax


def cross_entropy(
    logits: Tensor,
    labels: np.ndarray,
    mode: str = "macro",
    class_weights: np.ndarray | None = None,
) -> Tensor:
    """-log softmax(logits)[label] reduced over the batch.

    mode "mean": plain average. mode "macro": average per-class mean losses
    over the classes present in the batch.
    """
    labels = np.asarray(labels, dtype=np.int64)
    n, k = logits.shape
    if labels.shape != (n,):
        raise LabelError(f"labels shape {labels.shape} does not match batch {n}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise LabelError(f"labels must be in [0,{k}), got range [{labels.min()},{labels.max()}]")

    logp = log_softmax(logits, axis=-1)
    per_sample = -logp[np.arange(n), labels]  # [n]
    if class_weights is not None:
        per_sample = per_sample * np.asarray(class_weights, dtype=logits.dtype)[labels]

    if mode == "mean":
        return per_sample.mean()
    if mode != "macro":
        raise ValueError(f"unknown loss mode {mode!r}")

    present = np.unique(labels)
    class_means = [per_sample[labels == c].mean() for c in present]
    return Tensor.stack(class_means).mean()
