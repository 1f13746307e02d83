"""WAV decoding, resampling, and length normalization.

Everything downstream assumes the canonical form produced here:
16 kHz mono float in [-1, 1], exactly 10 s (160000 samples) after
``pad_or_trim``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DecodeError, UnsupportedFormatError

CANONICAL_RATE = 16000
CANONICAL_SECONDS = 10.0


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray  # float mono, [-1, 1]
    sample_rate: int

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if self.samples.ndim != 1:
            raise ValueError(f"samples must be 1-D, got shape {self.samples.shape}")
        if self.samples.size and not np.all(np.isfinite(self.samples)):
            raise ValueError("non-finite samples in waveform")

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


def decode_wav(data: bytes) -> Waveform:
    """Decode a RIFF/WAVE container (PCM16 or float32, 1-2 channels) to mono.

    Stereo is averaged; PCM16 samples are scaled by 1/32768.
    """
    if len(data) < 12:
        raise DecodeError("file too short for a RIFF header")
    if data[0:4] != b"RIFF":
        raise DecodeError(f"missing RIFF magic (got {data[0:4]!r})")
    if data[8:12] != b"WAVE":
        raise DecodeError(f"missing WAVE form type (got {data[8:12]!r})")

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos : pos + 4]
        (chunk_size,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8 : pos + 8 + chunk_size]
        if chunk_id == b"fmt ":
            if len(body) < 16:
                raise DecodeError("fmt chunk truncated")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif chunk_id == b"data":
            payload = body
        pos += 8 + chunk_size + (chunk_size & 1)  # chunks are word-aligned

    if fmt is None:
        raise DecodeError("missing fmt chunk")
    if payload is None:
        raise DecodeError("missing data chunk")

    audio_format, n_channels, sample_rate, _, _, bits = fmt
    if n_channels not in (1, 2):
        raise UnsupportedFormatError(f"unsupported channel count {n_channels}")

    if audio_format == 1 and bits == 16:
        raw = np.frombuffer(payload[: len(payload) - len(payload) % 2], dtype="<i2")
        samples = raw.astype(np.float64) / 32768.0
    elif audio_format == 3 and bits == 32:
        raw = np.frombuffer(payload[: len(payload) - len(payload) % 4], dtype="<f4")
        samples = raw.astype(np.float64)
    else:
        raise UnsupportedFormatError(
            f"unsupported codec: format tag {audio_format}, {bits} bits"
        )

    if n_channels == 2:
        samples = samples[: len(samples) - len(samples) % 2]
        samples = samples.reshape(-1, 2).mean(axis=1)
    return Waveform(samples.astype(np.float32), int(sample_rate))


def encode_wav_pcm16(w: Waveform) -> bytes:
    """Serialize a waveform as a mono PCM16 WAV file."""
    # same 1/32768 step as decode, so a roundtrip stays within half an LSB
    pcm = np.clip(np.round(w.samples * 32768.0), -32768, 32767).astype("<i2")
    body = pcm.tobytes()
    byte_rate = w.sample_rate * 2
    header = b"RIFF" + struct.pack("<I", 36 + len(body)) + b"WAVE"
    header += b"fmt " + struct.pack("<IHHIIHH", 16, 1, 1, w.sample_rate, byte_rate, 2, 16)
    header += b"data" + struct.pack("<I", len(body))
    return header + body


def _sinc_kernel_taps(half_width: int, cutoff: float, frac: np.ndarray) -> np.ndarray:
    """Hann-windowed sinc taps evaluated at offsets (k - frac) for k in [-hw+1, hw]."""
    k = np.arange(-half_width + 1, half_width + 1)  # (2*hw,)
    t = k[None, :] - frac[:, None]  # (n_out, taps)
    kernel = cutoff * np.sinc(cutoff * t)
    window = 0.5 * (1.0 + np.cos(np.pi * t / half_width))
    window[np.abs(t) >= half_width] = 0.0
    return kernel * window


def resample(w: Waveform, target_rate: int, half_width: int = 16) -> Waveform:
    """Windowed-sinc resample to ``target_rate``.

    Identical rates pass through bitwise; output length is
    round(len * target / source).
    """
    if target_rate <= 0:
        raise ValueError(f"target_rate must be positive, got {target_rate}")
    if target_rate == w.sample_rate:
        return w
    n_in = len(w.samples)
    n_out = int(round(n_in * target_rate / w.sample_rate))
    if n_in == 0 or n_out == 0:
        return Waveform(np.zeros(0, dtype=np.float32), target_rate)

    ratio = target_rate / w.sample_rate
    cutoff = min(1.0, ratio)  # anti-alias when downsampling
    positions = np.arange(n_out) / ratio
    base = np.floor(positions).astype(np.int64)
    frac = positions - base

    taps = _sinc_kernel_taps(half_width, cutoff, frac)
    taps /= taps.sum(axis=1, keepdims=True)  # constants are exact fixed points
    offsets = np.arange(-half_width + 1, half_width + 1)
    idx = base[:, None] + offsets[None, :]
    padded = np.pad(w.samples.astype(np.float64), (half_width, half_width), mode="edge")
    gathered = padded[idx + half_width]
    out = np.sum(gathered * taps, axis=1)
    return Waveform(out.astype(np.float32), target_rate)


def pad_or_trim(w: Waveform, max_seconds: float = CANONICAL_SECONDS) -> Waveform:
    """Force length to exactly rate*max_seconds: truncate or zero-pad the tail."""
    target = int(round(w.sample_rate * max_seconds))
    n = len(w.samples)
    if n == target:
        return w
    if n > target:
        return Waveform(w.samples[:target], w.sample_rate)
    out = np.zeros(target, dtype=w.samples.dtype)
    out[:n] = w.samples
    return Waveform(out, w.sample_rate)


def peak_normalize(w: Waveform) -> Waveform:
    """Scale so max |sample| = 1. All-zero (and already-peaked) input unchanged."""
    if len(w.samples) == 0:
        return w
    peak = float(np.max(np.abs(w.samples)))
    if peak == 0.0 or peak == 1.0:
        return w
    return Waveform((w.samples / peak).astype(w.samples.dtype), w.sample_rate)


def canonicalize(w: Waveform, max_seconds: float = CANONICAL_SECONDS) -> Waveform:
    """Resample to 16 kHz then fix the length."""
    return pad_or_trim(resample(w, CANONICAL_RATE), max_seconds)
