"""Training protocol: epochs, cosine schedule, early stopping, checkpoints.

The trainer is generic over model families: it sees only a forward callable
from (params, inputs, training, rng) to logits.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, asdict
from typing import Callable

import numpy as np

from .dataset import make_batches
from .errors import CheckpointError, ConfigError, TrainingError
from .nn import AdamState, ParamStore, Tensor, adam_step, clip_grad_norm, cosine_lr, cross_entropy

CHECKPOINT_MAGIC = b"SERF"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 30
    patience: int = 5
    lr0: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 16
    loss_mode: str = "macro"  # or "mean"
    clip_norm: float = 5.0
    seed: int = 0
    freeze_mask: tuple[str, ...] = ()
    min_improvement: float = 1e-6

    def __post_init__(self):
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")
        if self.lr0 <= 0:
            raise ConfigError("lr0 must be positive")
        if self.loss_mode not in ("macro", "mean"):
            raise ConfigError(f"loss_mode must be macro or mean, got {self.loss_mode!r}")


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)
    best_epoch: int = -1
    stop_reason: str = ""

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    def to_csv(self) -> str:
        lines = ["epoch,train_loss,val_loss,val_acc,lr"]
        for i in range(len(self.train_loss)):
            lines.append(
                f"{i},{self.train_loss[i]!r},{self.val_loss[i]!r},{self.val_accuracy[i]!r},{self.lr[i]!r}"
            )
        return "\n".join(lines) + "\n"


def apply_freeze_mask(store: ParamStore, patterns: tuple[str, ...] | list[str]) -> int:
    """Freeze params matching any glob pattern; returns how many were frozen."""
    if not patterns:
        return 0
    count = store.freeze(list(patterns))
    return count


ForwardFn = Callable[[ParamStore, np.ndarray, bool, np.random.Generator | None], Tensor]
BatchFn = Callable[[np.ndarray, int], tuple[np.ndarray, np.ndarray]]


def evaluate_accuracy(
    forward: ForwardFn,
    params: ParamStore,
    inputs: np.ndarray,
    labels: np.ndarray,
    batch_size: int,
    loss_mode: str = "macro",
) -> tuple[float, float]:
    """(mean loss, accuracy) over a fixed split in eval mode."""
    losses, correct = [], 0
    for lo in range(0, len(labels), batch_size):
        x = inputs[lo : lo + batch_size]
        y = labels[lo : lo + batch_size]
        logits = forward(params, x, False, None)
        losses.append(float(cross_entropy(logits, y, mode=loss_mode).data) * len(y))
        correct += int((logits.data.argmax(axis=-1) == y).sum())
    return sum(losses) / len(labels), correct / len(labels)


def train(
    forward: ForwardFn,
    params: ParamStore,
    get_train_batch: BatchFn,
    n_train: int,
    val_inputs: np.ndarray,
    val_labels: np.ndarray,
    cfg: TrainConfig,
    log: Callable[[str], None] | None = None,
) -> tuple[dict[str, np.ndarray], TrainHistory]:
    """Run the full protocol; returns (best parameter snapshot, history).

    ``get_train_batch(indices, epoch)`` supplies already-featurized inputs
    (augmentation, when enabled, lives inside it). Validation always runs
    in eval mode on fixed inputs.
    """
    if n_train == 0 or len(val_labels) == 0:
        raise ConfigError("train and val splits must be non-empty")

    frozen = apply_freeze_mask(params, cfg.freeze_mask)
    if log and frozen:
        log(f"froze {frozen} parameters via {list(cfg.freeze_mask)}")

    state = AdamState(params)
    history = TrainHistory()
    batches_per_epoch = (n_train + cfg.batch_size - 1) // cfg.batch_size
    total_steps = cfg.max_epochs * batches_per_epoch
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((cfg.seed, 0xD207))))

    best_acc = -1.0
    best_snapshot = params.snapshot()
    epochs_since_best = 0
    global_step = 0

    for epoch in range(cfg.max_epochs):
        epoch_loss = 0.0
        for batch_i, idx in enumerate(make_batches(n_train, cfg.batch_size, cfg.seed, epoch)):
            x, y = get_train_batch(idx, epoch)
            params.zero_grad()
            logits = forward(params, x, True, rng)
            loss = cross_entropy(logits, y, mode=cfg.loss_mode)
            loss_val = float(loss.data)
            if not np.isfinite(loss_val):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {batch_i}")
            loss.backward()
            clip_grad_norm(params, cfg.clip_norm)
            lr = cosine_lr(global_step, total_steps, cfg.lr0)
            adam_step(params, state, lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
            global_step += 1
            epoch_loss += loss_val * len(y)

        val_loss, val_acc = evaluate_accuracy(forward, params, val_inputs, val_labels, cfg.batch_size, cfg.loss_mode)
        history.train_loss.append(epoch_loss / n_train)
        history.val_loss.append(val_loss)
        history.val_accuracy.append(val_acc)
        history.lr.append(cosine_lr(min(global_step, total_steps), total_steps, cfg.lr0))
        if log:
            log(f"epoch {epoch}: train_loss={epoch_loss / n_train:.4f} val_loss={val_loss:.4f} val_acc={val_acc:.4f}")

        if val_acc > best_acc + cfg.min_improvement:
            best_acc = val_acc
            history.best_epoch = epoch
            best_snapshot = params.snapshot()
            epochs_since_best = 0
        else:
            epochs_since_best += 1
            if epochs_since_best >= cfg.patience:
                history.stop_reason = f"early stop: no val-accuracy improvement for {cfg.patience} epochs"
                break
    else:
        history.stop_reason = "max_epochs reached"

    params.load_values(best_snapshot)
    return best_snapshot, history


# -- checkpoint I/O -------------------------------------------------------


def save_checkpoint(store: ParamStore, meta: dict, path: str):
    """Binary format: magic, version, JSON metadata, float32 payloads in name order."""
    names = store.names()
    meta = dict(meta)
    meta["parameters"] = {n: list(store[n].data.shape) for n in names}
    meta_bytes = json.dumps(meta).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", CHECKPOINT_VERSION))
        f.write(struct.pack("<I", len(meta_bytes)))
        f.write(meta_bytes)
        for n in names:
            f.write(store[n].data.astype("<f4").tobytes())


def load_checkpoint(path: str) -> tuple[dict[str, np.ndarray], dict]:
    """Returns (name -> float32 array, metadata)."""
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(blob) < 12 or blob[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint (bad magic)")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"checkpoint version {version} unsupported (expected {CHECKPOINT_VERSION})")
    (meta_len,) = struct.unpack_from("<I", blob, 8)
    try:
        meta = json.loads(blob[12 : 12 + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint metadata in {path}") from exc
    offset = 12 + meta_len
    values: dict[str, np.ndarray] = {}
    for name, shape in meta.get("parameters", {}).items():
        count = int(np.prod(shape)) if shape else 1
        end = offset + 4 * count
        if end > len(blob):
            raise CheckpointError(f"checkpoint {path} truncated at parameter {name!r}")
        values[name] = np.frombuffer(blob[offset:end], dtype="<f4").reshape(shape).copy()
        offset = end
    return values, meta


def restore_into(store: ParamStore, values: dict[str, np.ndarray]):
    """Load checkpoint values into an existing store; shape errors name the tensor."""
    missing = set(store.names()) - set(values)
    if missing:
        raise CheckpointError(f"checkpoint missing parameters: {sorted(missing)[:5]}")
    store.load_values({n: values[n] for n in store.names()})
