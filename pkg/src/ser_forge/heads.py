"""Interchangeable classification heads: Linear, MLP, and attentive pooling.

Each head consumes backbone token outputs (CLS vector or the full token
matrix) and produces K-class logits. All heads are pure consumers: they
never touch backbone state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .nn import ParamStore, Tensor, dropout, layer_norm, linear, trunc_normal

HEAD_KINDS = ("linear", "mlp", "attentive_pool")
VAR_FLOOR = 1e-6  # keeps sqrt differentiable when token spread collapses


@dataclass(frozen=True)
class HeadConfig:
    kind: str = "mlp"
    d_in: int = 128
    mlp_hidden: int = 256
    d_att: int = 128
    dropout_p: float = 0.1
    n_classes: int = 6

    def __post_init__(self):
        if self.kind not in HEAD_KINDS:
            raise ConfigError(f"head.kind must be one of {HEAD_KINDS}, got {self.kind!r}")
        if self.mlp_hidden < 1:
            raise ConfigError("mlp_hidden must be >= 1")
        if self.n_classes < 2:
            raise ConfigError("need at least 2 classes")


def init_head_params(cfg: HeadConfig, store: ParamStore, rng: np.random.Generator, prefix: str = "head"):
    d, k = cfg.d_in, cfg.n_classes
    if cfg.kind == "linear":
        store.add(f"{prefix}.w", trunc_normal(rng, (k, d)))
        store.add(f"{prefix}.b", np.zeros(k))
    elif cfg.kind == "mlp":
        store.add(f"{prefix}.ln.gamma", np.ones(d))
        store.add(f"{prefix}.ln.beta", np.zeros(d))
        store.add(f"{prefix}.w1", trunc_normal(rng, (cfg.mlp_hidden, d)))
        store.add(f"{prefix}.b1", np.zeros(cfg.mlp_hidden))
        store.add(f"{prefix}.w2", trunc_normal(rng, (k, cfg.mlp_hidden)))
        store.add(f"{prefix}.b2", np.zeros(k))
    else:  # attentive_pool
        store.add(f"{prefix}.attn.w1", trunc_normal(rng, (cfg.d_att, d)))
        store.add(f"{prefix}.attn.w2", trunc_normal(rng, (cfg.d_att,)))
        store.add(f"{prefix}.w", trunc_normal(rng, (k, 2 * d)))
        store.add(f"{prefix}.b", np.zeros(k))


def linear_head(h_cls: Tensor, params: ParamStore, cfg: HeadConfig, prefix: str = "head") -> Tensor:
    """Single affine map on the CLS embedding."""
    if h_cls.shape[-1] != cfg.d_in:
        raise ShapeError(f"linear head expects dim {cfg.d_in}, got {h_cls.shape}")
    return linear(h_cls, params[f"{prefix}.w"], params[f"{prefix}.b"])


def mlp_head(
    h_cls: Tensor,
    params: ParamStore,
    cfg: HeadConfig,
    training: bool = False,
    rng: np.random.Generator | None = None,
    prefix: str = "head",
) -> Tensor:
    """LayerNorm -> affine -> ReLU -> Dropout -> affine."""
    if h_cls.shape[-1] != cfg.d_in:
        raise ShapeError(f"mlp head expects dim {cfg.d_in}, got {h_cls.shape}")
    h = layer_norm(h_cls, params[f"{prefix}.ln.gamma"], params[f"{prefix}.ln.beta"])
    h = linear(h, params[f"{prefix}.w1"], params[f"{prefix}.b1"]).relu()
    h = dropout(h, cfg.dropout_p, rng, training)
    return linear(h, params[f"{prefix}.w2"], params[f"{prefix}.b2"])


def attentive_pooling(tokens: Tensor, w1: Tensor, w2: Tensor) -> tuple[Tensor, Tensor, Tensor]:
    """Attention-weighted mean and standard deviation of token embeddings.

    tokens: [T, d] or [B, T, d]. Returns (alpha, mu, sigma) where sigma uses
    a variance floor before the square root.
    """
    if tokens.shape[-2] == 0:
        raise ShapeError("attentive pooling needs at least one token")
    scores = linear(tokens, w1).tanh() @ w2  # [.., T]
    shifted = scores - scores.data.max(axis=-1, keepdims=True)
    e = shifted.exp()
    alpha = e / e.sum(axis=-1, keepdims=True)  # [.., T]
    alpha_col = alpha.reshape(*alpha.shape, 1)
    mu = (alpha_col * tokens).sum(axis=-2)  # [.., d]
    centered = tokens - mu.reshape(*mu.shape[:-1], 1, mu.shape[-1])
    var = (alpha_col * centered * centered).sum(axis=-2)
    sigma = var.maximum(VAR_FLOOR).sqrt()
    return alpha, mu, sigma


def attentive_pooling_head(tokens: Tensor, params: ParamStore, cfg: HeadConfig, prefix: str = "head") -> Tensor:
    """Affine map on the concatenated [mu; sigma] statistics vector."""
    if tokens.shape[-1] != cfg.d_in:
        raise ShapeError(f"attentive head expects dim {cfg.d_in}, got {tokens.shape}")
    _, mu, sigma = attentive_pooling(tokens, params[f"{prefix}.attn.w1"], params[f"{prefix}.attn.w2"])
    stats = Tensor.concat([mu, sigma], axis=-1)
    return linear(stats, params[f"{prefix}.w"], params[f"{prefix}.b"])


def head_forward(
    cfg: HeadConfig,
    h_cls: Tensor,
    tokens: Tensor,
    params: ParamStore,
    training: bool = False,
    rng: np.random.Generator | None = None,
    prefix: str = "head",
) -> Tensor:
    """Dispatch on head kind; h_cls feeds linear/mlp, tokens feed attentive pooling."""
    if cfg.kind == "linear":
        return linear_head(h_cls, params, cfg, prefix)
    if cfg.kind == "mlp":
        return mlp_head(h_cls, params, cfg, training, rng, prefix)
    return attentive_pooling_head(tokens, params, cfg, prefix)
