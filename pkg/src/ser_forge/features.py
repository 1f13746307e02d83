"""STFT, log-Mel spectrogram, and MFCC extraction.

Non-centered framing: frames = 1 + floor((len - frame_length)/hop), no
reflection padding, so frame counts follow exact arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .audio_io import Waveform
from .errors import ConfigError, FramingError


@dataclass(frozen=True)
class FeatureConfig:
    frame_length: int = 400  # 25 ms @ 16 kHz
    hop: int = 160  # 10 ms
    fft_size: int = 512
    n_mels: int = 128
    fmin: float = 0.0
    fmax: float = 8000.0
    n_mfcc: int = 40
    log_floor: float = 1e-10

    def __post_init__(self):
        if not self.hop <= self.frame_length <= self.fft_size:
            raise ConfigError(
                f"need hop <= frame_length <= fft_size, got {self.hop}/{self.frame_length}/{self.fft_size}"
            )
        if self.fmin >= self.fmax:
            raise ConfigError(f"fmin {self.fmin} >= fmax {self.fmax}")
        if self.n_mfcc > self.n_mels:
            raise ConfigError(f"n_mfcc {self.n_mfcc} > n_mels {self.n_mels}")
        if self.log_floor <= 0:
            raise ConfigError("log_floor must be positive")


@dataclass(frozen=True)
class Spectrogram:
    data: np.ndarray  # frames x bins
    frame_rate: float  # frames per second
    bin_axis: Literal["hz-linear", "mel", "mfcc"]


def n_frames(signal_length: int, cfg: FeatureConfig) -> int:
    if signal_length < cfg.frame_length:
        raise FramingError(
            f"signal of {signal_length} samples shorter than one frame ({cfg.frame_length})"
        )
    return 1 + (signal_length - cfg.frame_length) // cfg.hop


def frame_signal(samples: np.ndarray, cfg: FeatureConfig) -> np.ndarray:
    m = n_frames(len(samples), cfg)
    idx = np.arange(cfg.frame_length)[None, :] + cfg.hop * np.arange(m)[:, None]
    return samples[idx]


def hann_window(length: int) -> np.ndarray:
    # periodic Hann
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * np.arange(length) / length))


def stft(w: Waveform, cfg: FeatureConfig) -> Spectrogram:
    """Hann-windowed frames zero-padded to fft_size; non-negative frequency bins."""
    frames = frame_signal(w.samples.astype(np.float64), cfg)
    windowed = frames * hann_window(cfg.frame_length)[None, :]
    spec = np.fft.rfft(windowed, n=cfg.fft_size, axis=1)
    return Spectrogram(spec, w.sample_rate / cfg.hop, "hz-linear")


def hz_to_mel(f):
    """HTK mel scale: 2595 * log10(1 + f/700)."""
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def _edge_integral(a: np.ndarray, b: np.ndarray, lo: float, hi: float, rising: bool) -> np.ndarray:
    """Integrate one linear edge of a unit triangle over bin intervals [a, b]."""
    a = np.clip(a, lo, hi)
    b = np.clip(b, lo, hi)
    width = hi - lo
    if rising:  # f(x) = (x - lo) / width
        return ((b - lo) ** 2 - (a - lo) ** 2) / (2 * width)
    return ((hi - a) ** 2 - (hi - b) ** 2) / (2 * width)


def mel_filterbank(cfg: FeatureConfig, rate: int) -> np.ndarray:
    """Triangular filters, centers equally spaced in mel between fmin and fmax.

    Each filter's triangle is integrated over every FFT bin's frequency
    interval (then divided by bin width), so narrow low-frequency filters
    keep positive weight even when they fall between bin centers.
    """
    if cfg.fmax > rate / 2:
        raise ConfigError(f"fmax {cfg.fmax} above Nyquist {rate / 2}")
    n_bins = cfg.fft_size // 2 + 1
    delta = rate / cfg.fft_size
    bin_lo = (np.arange(n_bins) - 0.5) * delta
    bin_hi = bin_lo + delta
    edges_hz = mel_to_hz(np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.n_mels + 2))

    fb = np.zeros((cfg.n_mels, n_bins))
    for i in range(cfg.n_mels):
        lo, center, hi = edges_hz[i], edges_hz[i + 1], edges_hz[i + 2]
        fb[i] = (
            _edge_integral(bin_lo, bin_hi, lo, center, rising=True)
            + _edge_integral(bin_lo, bin_hi, center, hi, rising=False)
        ) / delta

    if np.any(fb.sum(axis=1) == 0.0):
        empty = int(np.flatnonzero(fb.sum(axis=1) == 0.0)[0])
        raise ConfigError(
            f"mel filter {empty} is empty: n_mels={cfg.n_mels} too large for fft_size={cfg.fft_size}"
        )
    return fb


def log_mel(w: Waveform, cfg: FeatureConfig) -> Spectrogram:
    """log(max(filterbank @ |stft|^2, log_floor)), shape frames x n_mels."""
    spec = stft(w, cfg)
    power = np.abs(spec.data) ** 2
    fb = mel_filterbank(cfg, w.sample_rate)
    mel_power = power @ fb.T
    return Spectrogram(np.log(np.maximum(mel_power, cfg.log_floor)), spec.frame_rate, "mel")


def dct_ii_orthonormal(n: int) -> np.ndarray:
    """Orthonormal DCT-II basis, rows are coefficients."""
    k = np.arange(n)[:, None]
    m = np.arange(n)[None, :]
    basis = np.cos(np.pi * k * (2 * m + 1) / (2 * n)) * np.sqrt(2.0 / n)
    basis[0] *= np.sqrt(0.5)
    return basis


def mfcc(w: Waveform, cfg: FeatureConfig) -> Spectrogram:
    """First n_mfcc orthonormal DCT-II coefficients of the log-Mel spectrogram."""
    lm = log_mel(w, cfg)
    basis = dct_ii_orthonormal(cfg.n_mels)[: cfg.n_mfcc]
    return Spectrogram(lm.data @ basis.T, lm.frame_rate, "mfcc")
