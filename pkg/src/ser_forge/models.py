"""The three model families.

* Patch-based spectrogram transformer with patchout ("passt" family).
* Raw-waveform conv + transformer encoder ("wave_encoder" family).
* CNN + bidirectional-LSTM baseline on MFCCs ("cnn_lstm" family).

All forwards are batched: spectrogram inputs are [B, frames, bins] arrays,
waveform inputs [B, samples]. Backbones return (h_cls, tokens) so any head
can consume them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError
from .nn import ParamStore, Tensor, dropout, layer_norm, linear, lstm, max_pool2d, conv1d, conv2d, transformer_block, trunc_normal

MODEL_FAMILIES = ("passt", "wave_encoder", "cnn_lstm")


@dataclass(frozen=True)
class PatchConfig:
    patch_h: int = 16  # mel bins per patch
    patch_w: int = 16  # frames per patch
    embed_dim: int = 128
    n_blocks: int = 2
    n_heads: int = 4
    patchout_freq: int = 0  # whole frequency rows dropped during training
    patchout_time: int = 0  # whole time columns dropped during training
    patchout_fraction: float = 0.0  # optional unstructured extra
    dropout_p: float = 0.0

    def __post_init__(self):
        if self.embed_dim % self.n_heads != 0:
            raise ConfigError(f"embed_dim {self.embed_dim} not divisible by n_heads {self.n_heads}")
        if self.patch_h < 1 or self.patch_w < 1:
            raise ConfigError("patch dims must be >= 1")
        if not 0.0 <= self.patchout_fraction < 1.0:
            raise ConfigError("patchout_fraction must be in [0,1)")


@dataclass
class PatchSequence:
    tokens: Tensor  # [B, 1 + N_kept, d], CLS at index 0
    grid: tuple[int, int]  # (n_freq_patches, n_time_patches)
    kept_indices: np.ndarray  # [B, N_kept] original patch indices, sorted per row


def patch_grid(n_frames: int, n_bins: int, cfg: PatchConfig) -> tuple[int, int]:
    nf = n_bins // cfg.patch_h
    nt = n_frames // cfg.patch_w
    if nf == 0 or nt == 0:
        raise ShapeError(
            f"spectrogram {n_frames}x{n_bins} smaller than one {cfg.patch_w}x{cfg.patch_h} patch"
        )
    return nf, nt


def patchify(spec: np.ndarray, cfg: PatchConfig) -> tuple[np.ndarray, tuple[int, int]]:
    """Split [B, frames, bins] into flattened non-overlapping patches.

    Excess frames/bins are trimmed at the high end. Patch order is
    freq-major: index = f_patch * n_time_patches + t_patch. Returns
    ([B, N, patch_h*patch_w], grid).
    """
    if spec.ndim == 2:
        spec = spec[None]
    b, n_frames, n_bins = spec.shape
    nf, nt = patch_grid(n_frames, n_bins, cfg)
    trimmed = spec[:, : nt * cfg.patch_w, : nf * cfg.patch_h]
    # [B, nt, pw, nf, ph] -> [B, nf, nt, ph, pw]
    blocks = trimmed.reshape(b, nt, cfg.patch_w, nf, cfg.patch_h)
    patches = blocks.transpose(0, 3, 1, 4, 2).reshape(b, nf * nt, cfg.patch_h * cfg.patch_w)
    return patches, (nf, nt)


def unpatchify(patches: np.ndarray, grid: tuple[int, int], cfg: PatchConfig) -> np.ndarray:
    """Inverse of patchify on the trimmed spectrogram."""
    nf, nt = grid
    b = patches.shape[0]
    blocks = patches.reshape(b, nf, nt, cfg.patch_h, cfg.patch_w)
    return blocks.transpose(0, 2, 4, 1, 3).reshape(b, nt * cfg.patch_w, nf * cfg.patch_h)


def init_passt_params(cfg: PatchConfig, grid: tuple[int, int], rng: np.random.Generator) -> ParamStore:
    nf, nt = grid
    d = cfg.embed_dim
    store = ParamStore()
    store.add("embed.w", trunc_normal(rng, (d, cfg.patch_h * cfg.patch_w)))
    store.add("embed.b", np.zeros(d))
    store.add("embed.cls", trunc_normal(rng, (d,)))
    store.add("embed.pos_freq", trunc_normal(rng, (nf, d)))
    store.add("embed.pos_time", trunc_normal(rng, (nt, d)))
    for i in range(cfg.n_blocks):
        _init_block(store, f"blocks.{i}", d, rng)
    store.add("final_ln.gamma", np.ones(d))
    store.add("final_ln.beta", np.zeros(d))
    return store


def _init_block(store: ParamStore, prefix: str, d: int, rng: np.random.Generator, hidden: int | None = None):
    hidden = hidden or 4 * d
    store.add(f"{prefix}.ln1.gamma", np.ones(d))
    store.add(f"{prefix}.ln1.beta", np.zeros(d))
    store.add(f"{prefix}.attn.w_qkv", trunc_normal(rng, (3 * d, d)))
    store.add(f"{prefix}.attn.b_qkv", np.zeros(3 * d))
    store.add(f"{prefix}.attn.w_out", trunc_normal(rng, (d, d)))
    store.add(f"{prefix}.attn.b_out", np.zeros(d))
    store.add(f"{prefix}.ln2.gamma", np.ones(d))
    store.add(f"{prefix}.ln2.beta", np.zeros(d))
    store.add(f"{prefix}.mlp.w1", trunc_normal(rng, (hidden, d)))
    store.add(f"{prefix}.mlp.b1", np.zeros(hidden))
    store.add(f"{prefix}.mlp.w2", trunc_normal(rng, (d, hidden)))
    store.add(f"{prefix}.mlp.b2", np.zeros(d))


def embed_patches(patches: np.ndarray, grid: tuple[int, int], cfg: PatchConfig, params: ParamStore) -> PatchSequence:
    """Project flattened patches to the embed dim and add positional terms.

    Every patch receives pos_time[its time column] + pos_freq[its freq row];
    a learned CLS token is prepended.
    """
    nf, nt = grid
    b, n, _ = patches.shape
    if n != nf * nt:
        raise ShapeError(f"patch count {n} does not match grid {grid}")
    x = Tensor(patches.astype(np.float32))
    proj = linear(x, params["embed.w"], params["embed.b"])  # [B, N, d]
    freq_pos = np.repeat(np.arange(nf), nt)
    time_pos = np.tile(np.arange(nt), nf)
    proj = proj + params["embed.pos_freq"][freq_pos] + params["embed.pos_time"][time_pos]
    cls = params["embed.cls"].reshape(1, 1, cfg.embed_dim)
    cls_batch = Tensor.concat([cls] * b, axis=0) if b > 1 else cls
    tokens = Tensor.concat([cls_batch, proj], axis=1)
    kept = np.tile(np.arange(n), (b, 1))
    return PatchSequence(tokens=tokens, grid=grid, kept_indices=kept)


def patchout(
    seq: PatchSequence,
    cfg: PatchConfig,
    rng: np.random.Generator | None,
    training: bool,
) -> PatchSequence:
    """Structured patch dropout: remove whole freq rows and time columns.

    Eval mode is the identity. Each batch row draws its own rows/columns, so
    kept counts match across the batch. CLS is never dropped.
    """
    if not training or (cfg.patchout_freq == 0 and cfg.patchout_time == 0 and cfg.patchout_fraction == 0.0):
        return seq
    if rng is None:
        raise ConfigError("training-mode patchout needs an rng")
    nf, nt = seq.grid
    if cfg.patchout_freq >= nf or cfg.patchout_time >= nt:
        raise ConfigError(
            f"patchout ({cfg.patchout_freq} rows, {cfg.patchout_time} cols) would drop a full {nf}x{nt} grid axis"
        )
    b = seq.tokens.shape[0]
    n_struct = (nf - cfg.patchout_freq) * (nt - cfg.patchout_time)
    n_extra = int(cfg.patchout_fraction * n_struct)
    if n_struct - n_extra < 1:
        raise ConfigError("patchout would drop every non-CLS token")

    kept_rows = np.empty((b, n_struct - n_extra), dtype=np.int64)
    for i in range(b):
        drop_f = rng.choice(nf, size=cfg.patchout_freq, replace=False)
        drop_t = rng.choice(nt, size=cfg.patchout_time, replace=False)
        keep_f = np.setdiff1d(np.arange(nf), drop_f)
        keep_t = np.setdiff1d(np.arange(nt), drop_t)
        kept = (keep_f[:, None] * nt + keep_t[None, :]).reshape(-1)
        if n_extra:
            kept = np.sort(rng.choice(kept, size=n_struct - n_extra, replace=False))
        kept_rows[i] = kept

    prev_kept = seq.kept_indices
    # map original patch index -> current token slot (offset by CLS)
    slot = np.zeros((b, nf * nt), dtype=np.int64)
    np.put_along_axis(slot, prev_kept, np.arange(prev_kept.shape[1])[None, :], axis=1)
    gather = slot[np.arange(b)[:, None], kept_rows] + 1
    batch_idx = np.arange(b)[:, None]
    body = seq.tokens[batch_idx, gather]
    cls = seq.tokens[:, 0:1, :]
    return PatchSequence(
        tokens=Tensor.concat([cls, body], axis=1),
        grid=seq.grid,
        kept_indices=kept_rows,
    )


def passt_forward(
    spec: np.ndarray,
    cfg: PatchConfig,
    params: ParamStore,
    rng: np.random.Generator | None = None,
    training: bool = False,
) -> tuple[Tensor, Tensor]:
    """Patchify -> embed -> patchout -> transformer blocks -> final norm.

    Returns (h_cls [B, d], tokens [B, N_kept, d]).
    """
    patches, grid = patchify(np.asarray(spec), cfg)
    seq = embed_patches(patches, grid, cfg, params)
    seq = patchout(seq, cfg, rng, training)
    x = seq.tokens
    for i in range(cfg.n_blocks):
        x = transformer_block(x, params, f"blocks.{i}", cfg.n_heads, cfg.dropout_p, rng, training)
    x = layer_norm(x, params["final_ln.gamma"], params["final_ln.beta"])
    return x[:, 0, :], x[:, 1:, :]


# -- raw-waveform conv + transformer encoder ------------------------------


@dataclass(frozen=True)
class WaveEncoderConfig:
    # kernel == stride keeps token counts exact: 160000 samples -> 500 tokens
    conv_channels: tuple[int, ...] = (32, 32, 32, 32, 32, 32, 32)
    conv_strides: tuple[int, ...] = (5, 2, 2, 2, 2, 2, 2)
    embed_dim: int = 128
    n_blocks: int = 2
    n_heads: int = 4
    dropout_p: float = 0.0

    def __post_init__(self):
        if len(self.conv_channels) != len(self.conv_strides):
            raise ConfigError("conv_channels and conv_strides must have equal length")
        if self.embed_dim % self.n_heads != 0:
            raise ConfigError("embed_dim not divisible by n_heads")

    @property
    def total_stride(self) -> int:
        return int(np.prod(self.conv_strides))


def init_wave_encoder_params(cfg: WaveEncoderConfig, rng: np.random.Generator) -> ParamStore:
    store = ParamStore()
    c_in = 1
    for i, (c_out, k) in enumerate(zip(cfg.conv_channels, cfg.conv_strides)):
        store.add(f"conv.{i}.w", trunc_normal(rng, (c_out, c_in, k), std=0.05))
        store.add(f"conv.{i}.b", np.zeros(c_out))
        c_in = c_out
    store.add("proj.w", trunc_normal(rng, (cfg.embed_dim, c_in)))
    store.add("proj.b", np.zeros(cfg.embed_dim))
    store.add("pre_ln.gamma", np.ones(cfg.embed_dim))
    store.add("pre_ln.beta", np.zeros(cfg.embed_dim))
    for i in range(cfg.n_blocks):
        _init_block(store, f"blocks.{i}", cfg.embed_dim, rng)
    store.add("final_ln.gamma", np.ones(cfg.embed_dim))
    store.add("final_ln.beta", np.zeros(cfg.embed_dim))
    return store


def wave_encoder_forward(
    waves: np.ndarray,
    cfg: WaveEncoderConfig,
    params: ParamStore,
    rng: np.random.Generator | None = None,
    training: bool = False,
) -> tuple[Tensor, Tensor]:
    """Strided conv stack -> layer norm -> transformer blocks.

    waves: [B, samples]. Returns (mean-pooled summary [B, d], tokens [B, T, d]).
    """
    waves = np.atleast_2d(np.asarray(waves, dtype=np.float32))
    if waves.shape[1] < cfg.total_stride:
        raise ShapeError(f"input of {waves.shape[1]} samples shorter than the receptive field {cfg.total_stride}")
    x = Tensor(waves).reshape(waves.shape[0], 1, waves.shape[1])
    for i, stride in enumerate(cfg.conv_strides):
        x = conv1d(x, params[f"conv.{i}.w"], params[f"conv.{i}.b"], stride=stride).relu()
    x = x.swapaxes(1, 2)  # [B, T, C]
    x = linear(x, params["proj.w"], params["proj.b"])
    x = layer_norm(x, params["pre_ln.gamma"], params["pre_ln.beta"])
    for i in range(cfg.n_blocks):
        x = transformer_block(x, params, f"blocks.{i}", cfg.n_heads, cfg.dropout_p, rng, training)
    x = layer_norm(x, params["final_ln.gamma"], params["final_ln.beta"])
    return x.mean(axis=1), x


# -- CNN-LSTM baseline ----------------------------------------------------


@dataclass(frozen=True)
class CnnLstmConfig:
    conv_channels: tuple[int, int, int, int] = (32, 64, 64, 128)
    kernel: int = 3
    pool: int = 2
    lstm_hidden: int = 128
    n_lstm_layers: int = 3
    n_classes: int = 6
    n_mfcc: int = 40


def init_cnn_lstm_params(cfg: CnnLstmConfig, rng: np.random.Generator) -> ParamStore:
    store = ParamStore()
    c_in = 1
    for i, c_out in enumerate(cfg.conv_channels):
        fan_in = c_in * cfg.kernel * cfg.kernel
        store.add(f"conv.{i}.w", rng.standard_normal((c_out, c_in, cfg.kernel, cfg.kernel)) * np.sqrt(2.0 / fan_in))
        store.add(f"conv.{i}.b", np.zeros(c_out))
        c_in = c_out
    freq_out = cfg.n_mfcc
    for _ in cfg.conv_channels:
        freq_out //= cfg.pool
    lstm_in = cfg.conv_channels[-1] * max(freq_out, 1)
    h = cfg.lstm_hidden
    for i in range(cfg.n_lstm_layers):
        d_in = lstm_in if i == 0 else 2 * h
        for direction in ("fwd", "bwd"):
            scale = 1.0 / np.sqrt(h)
            store.add(f"lstm.{i}.{direction}.w_ih", rng.uniform(-scale, scale, (4 * h, d_in)))
            store.add(f"lstm.{i}.{direction}.w_hh", rng.uniform(-scale, scale, (4 * h, h)))
            store.add(f"lstm.{i}.{direction}.b", np.zeros(4 * h))
    store.add("fc.w", trunc_normal(rng, (cfg.n_classes, 2 * h)))
    store.add("fc.b", np.zeros(cfg.n_classes))
    return store


def cnn_lstm_forward(feats: np.ndarray, cfg: CnnLstmConfig, params: ParamStore) -> Tensor:
    """4x (conv+ReLU+pool) over (time, coeff) -> 3 BiLSTM layers -> logits.

    feats: [B, T, n_mfcc]. The classifier consumes the concatenated final
    states of the last layer (forward at t=T, backward at t=0).
    """
    feats = np.asarray(feats, dtype=np.float32)
    if feats.ndim == 2:
        feats = feats[None]
    b, t, f = feats.shape
    x = Tensor(feats).reshape(b, 1, t, f)
    pad = cfg.kernel // 2
    for i in range(len(cfg.conv_channels)):
        x = conv2d(x, params[f"conv.{i}.w"], params[f"conv.{i}.b"], stride=1, padding=pad).relu()
        x = max_pool2d(x, cfg.pool)
    _, c, th, fw = x.shape
    if th < 1:
        raise ShapeError("input too short: time axis vanished in the conv stack")
    seq = x.swapaxes(1, 2).reshape(b, th, c * fw)  # [B, T', C*F']
    for i in range(cfg.n_lstm_layers):
        seq = lstm(seq, params, f"lstm.{i}", bidirectional=True)
    h = cfg.lstm_hidden
    final = Tensor.concat([seq[:, -1, :h], seq[:, 0, h:]], axis=-1)
    return linear(final, params["fc.w"], params["fc.b"])
