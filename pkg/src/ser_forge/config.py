"""Experiment configuration: TOML or JSON file -> validated dataclasses."""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass, field, asdict

from .augment import AugmentConfig
from .errors import ConfigError
from .features import FeatureConfig
from .heads import HEAD_KINDS, HeadConfig
from .models import MODEL_FAMILIES, CnnLstmConfig, PatchConfig, WaveEncoderConfig
from .train import TrainConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass(frozen=True)
class DatasetConfig:
    kind: str = "toy"  # "toy" | "crema"
    crema_dir: str | None = None
    toy_n_per_class: int = 140
    ratios: tuple[float, float, float] = (0.70, 0.15, 0.15)

    def __post_init__(self):
        if self.kind not in ("toy", "crema"):
            raise ConfigError(f"dataset.kind must be toy or crema, got {self.kind!r}")
        if self.kind == "crema" and not self.crema_dir:
            raise ConfigError("dataset.crema_dir required when dataset.kind = 'crema'")
        if abs(sum(self.ratios) - 1.0) > 1e-9:
            raise ConfigError(f"dataset.ratios must sum to 1, got {self.ratios}")


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    augment_enabled: bool = False
    model_family: str = "passt"
    patch: PatchConfig = field(default_factory=PatchConfig)
    wave_encoder: WaveEncoderConfig = field(default_factory=WaveEncoderConfig)
    cnn_lstm: CnnLstmConfig = field(default_factory=CnnLstmConfig)
    head: HeadConfig = field(default_factory=HeadConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    output_dir: str = "runs/run"
    seed: int = 0

    def __post_init__(self):
        if self.model_family not in MODEL_FAMILIES:
            raise ConfigError(f"model.family must be one of {MODEL_FAMILIES}, got {self.model_family!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _build(section: str, cls, data: dict):
    try:
        return cls(**data)
    except TypeError as exc:
        bad = str(exc).split("'")
        name = bad[1] if len(bad) > 1 else "?"
        raise ConfigError(f"{section}.{name}: unknown or invalid field") from exc
    except ConfigError as exc:
        raise ConfigError(f"{section}: {exc}") from exc


def _tupled(data: dict, *keys: str) -> dict:
    out = dict(data)
    for k in keys:
        if k in out and isinstance(out[k], list):
            out[k] = tuple(out[k])
    return out


def config_from_dict(raw: dict) -> ExperimentConfig:
    known = {"dataset", "features", "augment", "model", "head", "train", "output_dir", "seed"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown top-level config section(s): {sorted(unknown)}")

    seed = int(raw.get("seed", 0))
    dataset = _build("dataset", DatasetConfig, _tupled(raw.get("dataset", {}), "ratios"))
    features = _build("features", FeatureConfig, raw.get("features", {}))

    aug_raw = _tupled(raw.get("augment", {}), "gain_db_range", "noise_snr_db_range", "pitch_factor_range")
    augment_enabled = bool(aug_raw.pop("enabled", False))
    aug_raw.setdefault("seed", seed)
    augment = _build("augment", AugmentConfig, aug_raw)

    model_raw = dict(raw.get("model", {}))
    family = model_raw.pop("family", "passt")
    patch = _build("model", PatchConfig, model_raw) if family == "passt" else PatchConfig()
    wave = (
        _build("model", WaveEncoderConfig, _tupled(model_raw, "conv_channels", "conv_strides"))
        if family == "wave_encoder"
        else WaveEncoderConfig()
    )
    cnn = _build("model", CnnLstmConfig, _tupled(model_raw, "conv_channels")) if family == "cnn_lstm" else CnnLstmConfig()

    head_raw = dict(raw.get("head", {}))
    if "kind" in head_raw and head_raw["kind"] not in HEAD_KINDS:
        raise ConfigError(f"head.kind must be one of {HEAD_KINDS}, got {head_raw['kind']!r}")
    if family == "passt":
        head_raw.setdefault("d_in", patch.embed_dim)
    elif family == "wave_encoder":
        head_raw.setdefault("d_in", wave.embed_dim)
    head = _build("head", HeadConfig, head_raw)

    train_raw = _tupled(raw.get("train", {}), "freeze_mask")
    train_raw.setdefault("seed", seed)
    train_cfg = _build("train", TrainConfig, train_raw)

    return ExperimentConfig(
        dataset=dataset,
        features=features,
        augment=augment,
        augment_enabled=augment_enabled,
        model_family=family,
        patch=patch,
        wave_encoder=wave,
        cnn_lstm=cnn,
        head=head,
        train=train_cfg,
        output_dir=str(raw.get("output_dir", "runs/run")),
        seed=seed,
    )


def load_config(path: str) -> ExperimentConfig:
    """Load a TOML (or JSON) experiment config file."""
    with open(path, "rb") as f:
        blob = f.read()
    if path.endswith(".json"):
        raw = json.loads(blob.decode())
    else:
        try:
            raw = tomllib.loads(blob.decode())
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return config_from_dict(raw)
