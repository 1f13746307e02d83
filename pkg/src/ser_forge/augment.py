"""Seed-driven training-time waveform augmentation.

Four transforms (gain, additive Gaussian noise, pitch shift via resampling,
circular time shift) applied in a fixed order, each with its own probability,
followed by peak normalization. Fully deterministic given
(seed, sample_index, epoch).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .audio_io import Waveform, pad_or_trim, peak_normalize, resample
from .errors import ConfigError, DegenerateInputError

INF_SNR = math.inf  # sentinel: no noise


@dataclass(frozen=True)
class AugmentConfig:
    gain_db_range: tuple[float, float] = (-6.0, 6.0)
    noise_snr_db_range: tuple[float, float] = (15.0, 40.0)
    pitch_factor_range: tuple[float, float] = (0.95, 1.05)
    max_shift_fraction: float = 0.25
    p_gain: float = 0.5
    p_noise: float = 0.5
    p_pitch: float = 0.5
    p_shift: float = 0.5
    seed: int = 0

    def __post_init__(self):
        for name in ("gain_db_range", "noise_snr_db_range", "pitch_factor_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ConfigError(f"{name}: lo {lo} > hi {hi}")
        for name in ("p_gain", "p_noise", "p_pitch", "p_shift"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"{name} must be in [0,1], got {p}")
        if not 0.0 <= self.max_shift_fraction <= 1.0:
            raise ConfigError(f"max_shift_fraction must be in [0,1], got {self.max_shift_fraction}")


def apply_gain(w: Waveform, gain_db: float) -> Waveform:
    """Multiply by 10^(gain_db/20). No clipping; normalization happens later."""
    if gain_db == 0.0:
        return w
    scale = 10.0 ** (gain_db / 20.0)
    return Waveform((w.samples * scale).astype(w.samples.dtype), w.sample_rate)


def add_gaussian_noise(w: Waveform, snr_db: float, rng: np.random.Generator) -> Waveform:
    """Add zero-mean Gaussian noise at the given SNR (powers as mean square)."""
    if math.isinf(snr_db) and snr_db > 0:
        return w
    signal_power = float(np.mean(np.square(w.samples, dtype=np.float64)))
    if signal_power == 0.0:
        raise DegenerateInputError("cannot set a finite SNR on an all-zero signal")
    noise_power = signal_power / (10.0 ** (snr_db / 10.0))
    noise = rng.standard_normal(len(w.samples)) * math.sqrt(noise_power)
    return Waveform((w.samples + noise).astype(w.samples.dtype), w.sample_rate)


def pitch_shift_by_resample(w: Waveform, factor: float) -> Waveform:
    """Shift pitch by resampling and reinterpreting at the original rate.

    Output length always equals input length (pad_or_trim contract).
    """
    if not 0.5 < factor < 2.0:
        raise ConfigError(f"pitch factor must be in (0.5, 2.0), got {factor}")
    stretched = resample(w, int(round(w.sample_rate / factor)))
    reinterpreted = Waveform(stretched.samples, w.sample_rate)
    return pad_or_trim(reinterpreted, len(w.samples) / w.sample_rate)


def time_shift_circular(w: Waveform, shift: int) -> Waveform:
    """Circular roll: output[i] = input[(i - shift) mod len]."""
    if len(w.samples) == 0 or shift % len(w.samples) == 0:
        return w
    return Waveform(np.roll(w.samples, shift), w.sample_rate)


def _uniform(rng: np.random.Generator, lo: float, hi: float) -> float:
    draw = rng.uniform()
    if lo == hi:  # collapsed range; also keeps +inf SNR sentinels NaN-free
        return lo
    return lo + draw * (hi - lo)


def sample_rng(seed: int, sample_index: int, epoch: int) -> np.random.Generator:
    """Independent per-(sample, epoch) stream derived from the master seed."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, sample_index, epoch))))


def augment_pipeline(
    w: Waveform, cfg: AugmentConfig, sample_index: int, epoch: int = 0
) -> Waveform:
    """Apply gain -> noise -> pitch -> shift, each with its probability, then normalize."""
    rng = sample_rng(cfg.seed, sample_index, epoch)
    # All draws happen unconditionally so the stream layout is stable.
    u = rng.uniform(size=4)
    gain_db = _uniform(rng, *cfg.gain_db_range)
    snr_db = _uniform(rng, *cfg.noise_snr_db_range)
    factor = _uniform(rng, *cfg.pitch_factor_range)
    max_shift = int(cfg.max_shift_fraction * len(w.samples))
    shift = int(rng.integers(-max_shift, max_shift + 1)) if max_shift > 0 else 0

    if u[0] < cfg.p_gain:
        w = apply_gain(w, gain_db)
    if u[1] < cfg.p_noise:
        w = add_gaussian_noise(w, snr_db, rng)
    if u[2] < cfg.p_pitch:
        w = pitch_shift_by_resample(w, factor)
    if u[3] < cfg.p_shift:
        w = time_shift_circular(w, shift)
    return peak_normalize(w)
