"""Differentiable layers: affine, norm, attention, convolution, LSTM.

Functional style: layers take input Tensors plus parameter Tensors (usually
drawn from a ParamStore) and return output Tensors on the autodiff graph.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, ShapeError
from .tensor import Tensor, softmax


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map: x [.., in] @ weight[out, in]^T + bias[out]."""
    if x.shape[-1] != weight.shape[-1]:
        raise ShapeError(f"linear: input {x.shape} does not match weight {weight.shape}")
    out = x @ weight.swapaxes(-1, -2)
    if bias is not None:
        out = out + bias
    return out


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Standardize over the last axis, then scale and shift."""
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    return centered / (var + eps).sqrt() * gamma + beta


def relu(x: Tensor) -> Tensor:
    return x.relu()


def tanh(x: Tensor) -> Tensor:
    return x.tanh()


def dropout(x: Tensor, p: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout: eval mode is the identity, kept units scale by 1/(1-p)."""
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout p must be in [0,1), got {p}")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ConfigError("training-mode dropout needs an rng")
    mask = (rng.uniform(size=x.shape) >= p) / (1.0 - p)
    return x * mask.astype(x.dtype)


def multi_head_self_attention(
    x: Tensor,
    w_qkv: Tensor,
    b_qkv: Tensor,
    w_out: Tensor,
    b_out: Tensor,
    n_heads: int,
) -> Tensor:
    """Scaled dot-product self-attention over tokens.

    x: [T, d] or [B, T, d]; w_qkv: [3d, d]; w_out: [d, d].
    """
    d = x.shape[-1]
    if d % n_heads != 0:
        raise ConfigError(f"model dim {d} not divisible by {n_heads} heads")
    squeeze = x.ndim == 2
    if squeeze:
        x = x.reshape(1, *x.shape)
    batch, t, _ = x.shape
    dh = d // n_heads

    qkv = linear(x, w_qkv, b_qkv)  # [B, T, 3d]
    qkv = qkv.reshape(batch, t, 3, n_heads, dh)
    qkv = qkv.swapaxes(1, 2).swapaxes(2, 3)  # [B, 3, h, T, dh]
    q, k, v = qkv[:, 0], qkv[:, 1], qkv[:, 2]

    scores = (q @ k.swapaxes(-1, -2)) * (1.0 / np.sqrt(dh))  # [B, h, T, T]
    attn = softmax(scores, axis=-1)
    ctx = attn @ v  # [B, h, T, dh]
    merged = ctx.swapaxes(1, 2).reshape(batch, t, d)
    out = linear(merged, w_out, b_out)
    return out.reshape(t, d) if squeeze else out


def transformer_block(
    x: Tensor,
    params,
    prefix: str,
    n_heads: int,
    dropout_p: float = 0.0,
    rng: np.random.Generator | None = None,
    training: bool = False,
) -> Tensor:
    """Pre-norm residual block: x + MHSA(LN(x)), then + MLP(LN(.)).

    MLP: one hidden expansion with ReLU. Parameter names under `prefix`:
    ln1.{gamma,beta}, attn.{w_qkv,b_qkv,w_out,b_out}, ln2.{gamma,beta},
    mlp.{w1,b1,w2,b2}.
    """
    p = lambda name: params[f"{prefix}.{name}"]
    h = layer_norm(x, p("ln1.gamma"), p("ln1.beta"))
    h = multi_head_self_attention(h, p("attn.w_qkv"), p("attn.b_qkv"), p("attn.w_out"), p("attn.b_out"), n_heads)
    h = dropout(h, dropout_p, rng, training)
    x = x + h
    h = layer_norm(x, p("ln2.gamma"), p("ln2.beta"))
    h = linear(h, p("mlp.w1"), p("mlp.b1")).relu()
    h = linear(h, p("mlp.w2"), p("mlp.b2"))
    h = dropout(h, dropout_p, rng, training)
    return x + h


# -- convolution ---------------------------------------------------------


def conv2d(x: Tensor, kernels: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation. x: [B, C_in, H, W], kernels: [C_out, C_in, kh, kw].

    Output spatial dims: floor((in + 2*padding - k)/stride) + 1. Patch
    extraction and the col2im in the backward pass loop over the kh*kw
    kernel offsets with strided slices (cheap; no giant index arrays).
    """
    if x.ndim != 4 or kernels.ndim != 4:
        raise ShapeError(f"conv2d expects 4-D input/kernels, got {x.shape} and {kernels.shape}")
    b_sz, c_in, h_in, w_in = x.shape
    c_out, c_k, kh, kw = kernels.shape
    if c_k != c_in:
        raise ShapeError(f"conv2d channels: input {c_in} vs kernel {c_k}")
    oh = (h_in + 2 * padding - kh) // stride + 1
    ow = (w_in + 2 * padding - kw) // stride + 1
    if oh <= 0 or ow <= 0:
        raise ShapeError(f"kernel {kh}x{kw} does not fit padded input {h_in}x{w_in}")

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    cols = np.empty((b_sz, c_in, kh, kw, oh, ow), dtype=xp.dtype)
    for ki in range(kh):
        for kj in range(kw):
            cols[:, :, ki, kj] = xp[:, :, ki : ki + stride * oh : stride, kj : kj + stride * ow : stride]
    cols_mat = cols.reshape(b_sz, c_in * kh * kw, oh * ow)
    w_mat = kernels.data.reshape(c_out, -1)
    out = np.einsum("oc,bcp->bop", w_mat, cols_mat, optimize=True).reshape(b_sz, c_out, oh, ow)
    if bias is not None:
        out = out + bias.data.reshape(1, c_out, 1, 1)

    def backward(g):
        g_flat = g.reshape(b_sz, c_out, -1)  # [B, c_out, oh*ow]
        if kernels.requires_grad:
            dw = np.einsum("bop,bcp->oc", g_flat, cols_mat, optimize=True)
            kernels._accumulate(dw.reshape(kernels.shape))
        if bias is not None and bias.requires_grad:
            bias._accumulate(g.sum(axis=(0, 2, 3)).reshape(bias.shape))
        if x.requires_grad:
            dcols = np.einsum("oc,bop->bcp", w_mat, g_flat, optimize=True)
            dcols = dcols.reshape(b_sz, c_in, kh, kw, oh, ow)
            dxp = np.zeros_like(xp)
            for ki in range(kh):
                for kj in range(kw):
                    dxp[:, :, ki : ki + stride * oh : stride, kj : kj + stride * ow : stride] += dcols[:, :, ki, kj]
            dx = dxp[:, :, padding : padding + h_in, padding : padding + w_in] if padding else dxp
            x._accumulate(dx)

    parents = (x, kernels) if bias is None else (x, kernels, bias)
    return Tensor._make(out.astype(x.dtype), parents, backward)


def conv1d(x: Tensor, kernels: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """x: [B, C_in, L], kernels: [C_out, C_in, k]. Implemented via conv2d."""
    b_sz, c_in, length = x.shape
    c_out, _, ksz = kernels.shape
    out = conv2d(
        x.reshape(b_sz, c_in, 1, length),
        kernels.reshape(c_out, c_in, 1, ksz),
        bias,
        stride=stride,
        padding=0,
    )
    if padding:
        raise ConfigError("conv1d padding not supported; pad the signal first")
    return out.reshape(b_sz, c_out, out.shape[-1])


def max_pool2d(x: Tensor, size: int = 2) -> Tensor:
    """Non-overlapping max pooling; trailing rows/cols beyond a full window dropped."""
    b_sz, c, h, w = x.shape
    oh, ow = h // size, w // size
    trimmed = x.data[:, :, : oh * size, : ow * size]
    windows = trimmed.reshape(b_sz, c, oh, size, ow, size)
    out = windows.max(axis=(3, 5))
    # gradient routed to the first max occurrence in each window
    flat = windows.swapaxes(3, 4).reshape(b_sz, c, oh, ow, size * size)
    argmax = flat.argmax(axis=-1)

    def backward(g):
        dflat = np.zeros_like(flat)
        np.put_along_axis(dflat, argmax[..., None], g[..., None], axis=-1)
        dwin = dflat.reshape(b_sz, c, oh, ow, size, size).swapaxes(3, 4)
        dx = np.zeros_like(x.data)
        dx[:, :, : oh * size, : ow * size] = dwin.reshape(b_sz, c, oh * size, ow * size)
        x._accumulate(dx)

    return Tensor._make(out, (x,), backward)


# -- LSTM ----------------------------------------------------------------


def lstm_layer(x: Tensor, w_ih: Tensor, w_hh: Tensor, b: Tensor, reverse: bool = False) -> Tensor:
    """Single-direction LSTM over x [B, T, in] -> [B, T, H].

    Gate order in the stacked weights: input, forget, cell candidate, output.
    """
    b_sz, t_len, _ = x.shape
    hidden = w_hh.shape[-1]
    h = Tensor(np.zeros((b_sz, hidden), dtype=x.dtype))
    c = Tensor(np.zeros((b_sz, hidden), dtype=x.dtype))
    steps = range(t_len - 1, -1, -1) if reverse else range(t_len)
    outputs: list[Tensor | None] = [None] * t_len
    for t in steps:
        xt = x[:, t, :]
        gates = linear(xt, w_ih) + linear(h, w_hh) + b  # [B, 4H]
        gi = gates[:, 0:hidden].sigmoid()
        gf = gates[:, hidden : 2 * hidden].sigmoid()
        gg = gates[:, 2 * hidden : 3 * hidden].tanh()
        go = gates[:, 3 * hidden : 4 * hidden].sigmoid()
        c = gf * c + gi * gg
        h = go * c.tanh()
        outputs[t] = h
    return Tensor.stack(outputs, axis=1)  # type: ignore[arg-type]


def lstm(x: Tensor, params, prefix: str, bidirectional: bool = False) -> Tensor:
    """LSTM with params `{prefix}.fwd.{w_ih,w_hh,b}` (and `.bwd.*` if bidirectional).

    Returns [B, T, H] or [B, T, 2H] (forward and backward halves concatenated).
    """
    fwd = lstm_layer(x, params[f"{prefix}.fwd.w_ih"], params[f"{prefix}.fwd.w_hh"], params[f"{prefix}.fwd.b"])
    if not bidirectional:
        return fwd
    bwd = lstm_layer(
        x, params[f"{prefix}.bwd.w_ih"], params[f"{prefix}.bwd.w_hh"], params[f"{prefix}.bwd.b"], reverse=True
    )
    return Tensor.concat([fwd, bwd], axis=-1)
