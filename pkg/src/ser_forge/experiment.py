"""Experiment orchestration: data -> features -> model -> train -> report."""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import heads, models
from .audio_io import Waveform, canonicalize, decode_wav
from .augment import augment_pipeline
from .config import ExperimentConfig
from .dataset import (
    LabeledWaveform,
    SampleMeta,
    build_manifest,
    speaker_independent_split,
    synthesize_toy_dataset,
)
from .errors import ConfigError, SerForgeError
from .evaluate import EvalReport, measure_inference, model_size_mb, predict
from .features import log_mel, mfcc
from .nn import ParamStore, Tensor
from .train import TrainHistory, save_checkpoint, train as run_training


@dataclass
class SplitData:
    train: list[LabeledWaveform]
    val: list[LabeledWaveform]
    test: list[LabeledWaveform]
    split_json: str


def load_crema_sample(meta: SampleMeta, max_seconds: float = 10.0) -> LabeledWaveform:
    with open(meta.path, "rb") as f:
        w = decode_wav(f.read())
    return LabeledWaveform(canonicalize(w, max_seconds), meta.label, meta.actor_id, meta)


def load_dataset(cfg: ExperimentConfig) -> SplitData:
    """Build train/val/test LabeledWaveform lists via the speaker splitter."""
    if cfg.dataset.kind == "toy":
        rng = np.random.default_rng(cfg.seed)
        samples = synthesize_toy_dataset(cfg.dataset.toy_n_per_class, rng)
        metas = [s.meta for s in samples]
        by_path = {s.meta.path: s for s in samples}
        split = speaker_independent_split(metas, cfg.dataset.ratios, cfg.seed)
        pick = lambda ms: [by_path[m.path] for m in ms]
        return SplitData(pick(split.train), pick(split.val), pick(split.test), split.to_json())

    metas, bad = build_manifest(cfg.dataset.crema_dir)
    if not metas:
        raise ConfigError(f"no parseable WAV files in {cfg.dataset.crema_dir}")
    split = speaker_independent_split(metas, cfg.dataset.ratios, cfg.seed)
    load = lambda ms: [load_crema_sample(m) for m in ms]
    return SplitData(load(split.train), load(split.val), load(split.test), split.to_json())


# -- featurization --------------------------------------------------------


def featurize_waveform(w: Waveform, cfg: ExperimentConfig) -> np.ndarray:
    """Model-family input: log-mel for passt, MFCC for cnn_lstm, raw samples otherwise."""
    if cfg.model_family == "passt":
        return log_mel(w, cfg.features).data.astype(np.float32)
    if cfg.model_family == "cnn_lstm":
        return mfcc(w, cfg.features).data.astype(np.float32)
    return w.samples.astype(np.float32)


def _cache_key(samples: list[LabeledWaveform], cfg: ExperimentConfig) -> str:
    import hashlib
    from dataclasses import asdict

    h = hashlib.sha256()
    h.update(cfg.model_family.encode())
    h.update(json.dumps(asdict(cfg.features), sort_keys=True).encode())
    h.update(str(cfg.seed).encode())
    for s in samples:
        h.update(f"{s.meta.path if s.meta else ''}:{s.label}:{s.actor_id};".encode())
    return h.hexdigest()[:24]


def featurize_split(
    samples: list[LabeledWaveform], cfg: ExperimentConfig, workers: int = 1
) -> tuple[np.ndarray, np.ndarray]:
    """Featurize a split, using the SER_FORGE_CACHE directory when set."""
    labels = np.array([s.label for s in samples], dtype=np.int64)
    cache_dir = os.environ.get("SER_FORGE_CACHE")
    cache_path = None
    if cache_dir:
        os.makedirs(cache_dir, exist_ok=True)
        cache_path = os.path.join(cache_dir, f"feat_{_cache_key(samples, cfg)}.npy")
        if os.path.exists(cache_path):
            return np.load(cache_path), labels

    waves = [s.waveform for s in samples]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            feats = list(pool.map(featurize_waveform, waves, [cfg] * len(waves), chunksize=8))
    else:
        feats = [featurize_waveform(w, cfg) for w in waves]
    stacked = np.stack(feats)
    if cache_path:
        np.save(cache_path, stacked)
    return stacked, labels


# -- model construction and forward dispatch ------------------------------


class ModelBundle:
    """Backbone + head parameters with a uniform batched forward."""

    def __init__(self, cfg: ExperimentConfig, input_shape: tuple[int, ...]):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed + 1)
        if cfg.model_family == "passt":
            n_frames, n_mels = input_shape
            self.grid = models.patch_grid(n_frames, n_mels, cfg.patch)
            self.params = models.init_passt_params(cfg.patch, self.grid, rng)
            heads.init_head_params(cfg.head, self.params, rng)
        elif cfg.model_family == "wave_encoder":
            self.params = models.init_wave_encoder_params(cfg.wave_encoder, rng)
            heads.init_head_params(cfg.head, self.params, rng)
        else:
            self.params = models.init_cnn_lstm_params(cfg.cnn_lstm, rng)

    def forward(
        self,
        params: ParamStore,
        inputs: np.ndarray,
        training: bool,
        rng: np.random.Generator | None,
    ) -> Tensor:
        cfg = self.cfg
        if cfg.model_family == "passt":
            h_cls, tokens = models.passt_forward(inputs, cfg.patch, params, rng, training)
            return heads.head_forward(cfg.head, h_cls, tokens, params, training, rng)
        if cfg.model_family == "wave_encoder":
            pooled, tokens = models.wave_encoder_forward(inputs, cfg.wave_encoder, params, rng, training)
            return heads.head_forward(cfg.head, pooled, tokens, params, training, rng)
        return models.cnn_lstm_forward(inputs, cfg.cnn_lstm, params)

    def head_param_names(self) -> list[str]:
        prefix = "fc." if self.cfg.model_family == "cnn_lstm" else "head."
        return [n for n in self.params.names() if n.startswith(prefix)]

    def architecture_meta(self) -> dict:
        cfg = self.cfg
        meta = {"family": cfg.model_family, "head": cfg.head.kind}
        if cfg.model_family == "passt":
            meta["grid"] = list(self.grid)
        return meta


def data_order_hash(n_train: int, train_cfg) -> str:
    """Digest of the full epoch-by-epoch batch order; backbone/head-independent."""
    import hashlib

    from .dataset import make_batches

    h = hashlib.sha256()
    for epoch in range(train_cfg.max_epochs):
        for idx in make_batches(n_train, train_cfg.batch_size, train_cfg.seed, epoch):
            h.update(idx.astype("<i8").tobytes())
    return h.hexdigest()[:16]


# -- full runs ------------------------------------------------------------


def run_experiment(
    cfg: ExperimentConfig,
    out_dir: str | None = None,
    log=print,
    workers: int = 1,
    measure_latency: bool = True,
    model_name: str | None = None,
) -> tuple[EvalReport, TrainHistory]:
    """Train per config, evaluate the best checkpoint on the test split.

    Writes config copy, split JSON, checkpoint, history, and report files
    into the run directory.
    """
    out_dir = out_dir or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    data = load_dataset(cfg)
    log(f"splits: train={len(data.train)} val={len(data.val)} test={len(data.test)}")

    val_x, val_y = featurize_split(data.val, cfg, workers)
    test_x, test_y = featurize_split(data.test, cfg, workers)
    train_labels = np.array([s.label for s in data.train], dtype=np.int64)

    if cfg.augment_enabled:
        train_waves = [s.waveform for s in data.train]

        def get_train_batch(idx, epoch):
            feats = [
                featurize_waveform(augment_pipeline(train_waves[i], cfg.augment, int(i), epoch), cfg)
                for i in idx
            ]
            return np.stack(feats), train_labels[idx]

    else:
        train_x, _ = featurize_split(data.train, cfg, workers)

        def get_train_batch(idx, epoch):
            return train_x[idx], train_labels[idx]

    bundle = ModelBundle(cfg, val_x.shape[1:])
    log(f"model: {cfg.model_family} ({bundle.params.n_scalars()} parameters)")

    best, history = run_training(
        bundle.forward,
        bundle.params,
        get_train_batch,
        len(data.train),
        val_x,
        val_y,
        cfg.train,
        log=log,
    )

    # artifacts
    with open(os.path.join(out_dir, "config.json"), "w") as f:
        json.dump(cfg.to_dict(), f, indent=2, default=str)
    with open(os.path.join(out_dir, "split.json"), "w") as f:
        f.write(data.split_json)
    with open(os.path.join(out_dir, "history.json"), "w") as f:
        f.write(history.to_json())
    with open(os.path.join(out_dir, "history.csv"), "w") as f:
        f.write(history.to_csv())
    ckpt_path = os.path.join(out_dir, "checkpoint.serf")
    save_checkpoint(
        bundle.params,
        {"architecture": bundle.architecture_meta(), "config_hash": cfg.config_hash(), "best_epoch": history.best_epoch},
        ckpt_path,
    )

    report = evaluate_on(bundle, test_x, test_y, cfg, measure_latency=measure_latency, model_name=model_name)
    report.extra["data_order_hash"] = data_order_hash(len(data.train), cfg.train)
    from .evaluate import emit_report

    emit_report([report], out_dir)
    log(
        f"test: accuracy={report.accuracy:.4f} macro_f1={report.macro_f1:.4f} "
        f"size={report.model_size_mb} MB"
    )
    return report, history


def evaluate_checkpoint(
    cfg: ExperimentConfig,
    checkpoint_path: str,
    split_name: str = "test",
    workers: int = 1,
    measure_latency: bool = False,
) -> EvalReport:
    """Rebuild the dataset/model from config, load weights, evaluate one split."""
    from .train import load_checkpoint, restore_into

    if split_name not in ("train", "val", "test"):
        raise ConfigError(f"split must be train/val/test, got {split_name!r}")
    data = load_dataset(cfg)
    samples = getattr(data, split_name)
    x, y = featurize_split(samples, cfg, workers)
    bundle = ModelBundle(cfg, x.shape[1:])
    values, _meta = load_checkpoint(checkpoint_path)
    restore_into(bundle.params, values)
    return evaluate_on(bundle, x, y, cfg, measure_latency=measure_latency)


def run_head_ablation(
    cfg: ExperimentConfig, out_dir: str, log=print, workers: int = 1
) -> list[EvalReport]:
    """Train the three head kinds under otherwise-identical settings and seeds."""
    from dataclasses import replace

    from .evaluate import emit_report
    from .heads import HEAD_KINDS

    if cfg.model_family != "passt":
        raise ConfigError("head ablation requires model.family = 'passt'")
    reports = []
    for kind in HEAD_KINDS:
        sub_cfg = replace(cfg, head=replace(cfg.head, kind=kind))
        sub_dir = os.path.join(out_dir, f"head_{kind}")
        log(f"--- head: {kind} ---")
        report, _ = run_experiment(sub_cfg, sub_dir, log=log, workers=workers, model_name=f"passt-{kind}")
        reports.append(report)
    emit_report(reports, out_dir)
    return reports


def evaluate_on(
    bundle: ModelBundle,
    test_x: np.ndarray,
    test_y: np.ndarray,
    cfg: ExperimentConfig,
    measure_latency: bool = True,
    model_name: str | None = None,
) -> EvalReport:
    preds = []
    bs = cfg.train.batch_size
    for lo in range(0, len(test_y), bs):
        logits = bundle.forward(bundle.params, test_x[lo : lo + bs], False, None)
        preds.append(predict(logits.data))
    preds = np.concatenate(preds)

    name = model_name or f"{cfg.model_family}-{cfg.head.kind}"
    head_scalars = sum(bundle.params[n].data.size for n in bundle.head_param_names())
    ms = iqr = None
    if measure_latency:
        one = test_x[:1]
        ms, iqr = measure_inference(lambda: bundle.forward(bundle.params, one, False, None).data)
    return EvalReport.from_predictions(
        name,
        test_y,
        preds,
        inference_ms_per_sample=ms,
        inference_ms_iqr=iqr,
        model_size_mb=model_size_mb(bundle.params.n_scalars()),
        head_size_mb=model_size_mb(head_scalars),
        n_parameters=bundle.params.n_scalars(),
        config_hash=cfg.config_hash(),
        extra={"head_kind": cfg.head.kind},
    )
