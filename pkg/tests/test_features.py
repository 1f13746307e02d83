import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ser_forge.audio_io import Waveform
from ser_forge.errors import ConfigError, FramingError
from ser_forge.features import (
    FeatureConfig,
    dct_ii_orthonormal,
    frame_signal,
    hann_window,
    hz_to_mel,
    log_mel,
    mel_filterbank,
    mel_to_hz,
    mfcc,
    n_frames,
    stft,
)

CFG = FeatureConfig()


def naive_dft_frame(frame: np.ndarray, fft_size: int) -> np.ndarray:
    """O(n^2) reference DFT of one zero-padded frame, non-negative bins."""
    x = np.zeros(fft_size)
    x[: len(frame)] = frame
    n = np.arange(fft_size)
    out = []
    for k in range(fft_size // 2 + 1):
        out.append(np.sum(x * np.exp(-2j * np.pi * k * n / fft_size)))
    return np.array(out)


class TestFraming:
    def test_frame_count_formula(self):
        assert n_frames(160000, CFG) == 1 + (160000 - 400) // 160 == 998

    def test_exactly_one_frame(self):
        assert n_frames(400, CFG) == 1

    def test_too_short_raises(self):
        with pytest.raises(FramingError):
            n_frames(399, CFG)

    def test_frames_are_strided_views_of_signal(self):
        sig = np.arange(1000, dtype=np.float64)
        frames = frame_signal(sig, CFG)
        assert frames.shape == (n_frames(1000, CFG), 400)
        assert np.array_equal(frames[1], sig[160:560])
        assert np.array_equal(frames[2], sig[320:720])

    @given(st.integers(min_value=400, max_value=50000))
    @settings(max_examples=40, deadline=None)
    def test_frame_count_matches_shape(self, n):
        frames = frame_signal(np.zeros(n), CFG)
        assert frames.shape[0] == 1 + (n - 400) // 160


class TestStft:
    def test_dc_input_concentrates_in_bin_zero(self):
        w = Waveform(np.ones(400, dtype=np.float32), 16000)
        spec = stft(w, CFG).data[0]
        # Hann window sums to frame_length/2 for the periodic window
        assert spec[0].real == pytest.approx(200.0, rel=1e-6)
        assert np.abs(spec[0]) > 10 * np.max(np.abs(spec[5:]))

    def test_matches_naive_dft(self):
        rng = np.random.default_rng(3)
        sig = rng.uniform(-1, 1, 900).astype(np.float32)
        w = Waveform(sig, 16000)
        spec = stft(w, CFG)
        win = hann_window(400)
        for i in range(spec.data.shape[0]):
            frame = sig.astype(np.float64)[i * 160 : i * 160 + 400] * win
            oracle = naive_dft_frame(frame, 512)
            assert np.max(np.abs(spec.data[i] - oracle)) < 1e-6

    def test_bin_center_sine_peaks_at_expected_bin(self):
        # bin k center frequency is k * rate / fft_size; pick k = 16 -> 500 Hz
        freq = 16 * 16000 / 512
        t = np.arange(400) / 16000
        w = Waveform(np.sin(2 * np.pi * freq * t).astype(np.float32), 16000)
        mag = np.abs(stft(w, CFG).data[0])
        assert int(np.argmax(mag)) == 16

    def test_frame_rate(self):
        w = Waveform(np.zeros(16000, dtype=np.float32), 16000)
        assert stft(w, CFG).frame_rate == pytest.approx(100.0)


class TestMelScale:
    def test_1000hz_is_about_1000_mel(self):
        assert abs(hz_to_mel(1000.0) - 1000.0) < 0.5

    def test_zero_maps_to_zero(self):
        assert hz_to_mel(0.0) == 0.0
        assert mel_to_hz(0.0) == 0.0

    @given(st.floats(min_value=0.0, max_value=8000.0))
    @settings(max_examples=60, deadline=None)
    def test_roundtrip_and_monotone(self, f):
        assert mel_to_hz(hz_to_mel(f)) == pytest.approx(f, abs=1e-6)
        assert hz_to_mel(f + 1.0) > hz_to_mel(f)


class TestMelFilterbank:
    def test_shape_and_nonnegative(self):
        fb = mel_filterbank(CFG, 16000)
        assert fb.shape == (128, 257)
        assert np.all(fb >= 0.0)

    def test_every_filter_has_positive_weight(self):
        fb = mel_filterbank(CFG, 16000)
        assert np.all(fb.sum(axis=1) > 0.0)

    def test_filter_peak_tracks_center_frequency(self):
        fb = mel_filterbank(CFG, 16000)
        edges = mel_to_hz(np.linspace(hz_to_mel(0.0), hz_to_mel(8000.0), 130))
        delta = 16000 / 512
        for i in (32, 64, 96, 127):
            peak_hz = np.argmax(fb[i]) * delta
            width = edges[i + 2] - edges[i]
            assert abs(peak_hz - edges[i + 1]) < max(delta, width / 2)

    def test_fmax_above_nyquist_rejected(self):
        with pytest.raises(ConfigError):
            mel_filterbank(FeatureConfig(fmax=9000.0), 16000)

    def test_dense_filterbank_on_tiny_fft_keeps_positive_rows(self):
        # area integration keeps narrow filters alive even with 9 coarse bins
        cfg = FeatureConfig(frame_length=16, hop=16, fft_size=16, n_mels=64, n_mfcc=4)
        fb = mel_filterbank(cfg, 16000)
        assert np.all(fb.sum(axis=1) > 0.0)


class TestLogMel:
    def test_ten_second_shape(self):
        w = Waveform(np.random.default_rng(0).uniform(-1, 1, 160000).astype(np.float32), 16000)
        lm = log_mel(w, CFG)
        assert lm.data.shape == (998, 128)
        assert lm.bin_axis == "mel"

    def test_silence_hits_log_floor(self):
        w = Waveform(np.zeros(16000, dtype=np.float32), 16000)
        lm = log_mel(w, CFG)
        assert np.allclose(lm.data, np.log(1e-10))

    def test_amplitude_doubling_adds_log4(self):
        sig = np.random.default_rng(4).uniform(-0.4, 0.4, 16000).astype(np.float32)
        a = log_mel(Waveform(sig, 16000), CFG).data
        b = log_mel(Waveform(2 * sig, 16000), CFG).data
        mask = a > np.log(1e-10) + 1.5  # stay clear of the floor
        assert np.max(np.abs((b - a)[mask] - np.log(4.0))) < 1e-6

    def test_values_finite(self):
        w = Waveform(np.random.default_rng(5).uniform(-1, 1, 32000).astype(np.float32), 16000)
        assert np.all(np.isfinite(log_mel(w, CFG).data))


class TestDct:
    def test_orthonormal(self):
        basis = dct_ii_orthonormal(128)
        assert np.max(np.abs(basis @ basis.T - np.eye(128))) < 1e-9

    def test_matches_double_loop_oracle(self):
        n = 16
        basis = dct_ii_orthonormal(n)
        oracle = np.zeros((n, n))
        for k in range(n):
            scale = np.sqrt(1.0 / n) if k == 0 else np.sqrt(2.0 / n)
            for m in range(n):
                oracle[k, m] = scale * np.cos(np.pi * k * (2 * m + 1) / (2 * n))
        assert np.max(np.abs(basis - oracle)) < 1e-9

    def test_constant_vector_projects_to_dc_only(self):
        basis = dct_ii_orthonormal(8)
        coeffs = basis @ np.full(8, 3.0)
        assert coeffs[0] == pytest.approx(3.0 * np.sqrt(8))
        assert np.max(np.abs(coeffs[1:])) < 1e-9


class TestMfcc:
    def test_shape_and_axis(self):
        w = Waveform(np.random.default_rng(1).uniform(-1, 1, 160000).astype(np.float32), 16000)
        out = mfcc(w, CFG)
        assert out.data.shape == (998, 40)
        assert out.bin_axis == "mfcc"

    def test_constant_log_mel_gives_dc_coefficient(self):
        # silence: every mel band sits at the log floor, a constant vector
        w = Waveform(np.zeros(16000, dtype=np.float32), 16000)
        out = mfcc(w, CFG).data
        assert np.allclose(out[:, 0], np.log(1e-10) * np.sqrt(128))
        assert np.max(np.abs(out[:, 1:])) < 1e-9

    def test_equals_manual_composition(self):
        w = Waveform(np.random.default_rng(2).uniform(-1, 1, 8000).astype(np.float32), 16000)
        lm = log_mel(w, CFG).data
        oracle = lm @ dct_ii_orthonormal(128)[:40].T
        assert np.max(np.abs(mfcc(w, CFG).data - oracle)) < 1e-12


class TestConfigValidation:
    def test_hop_longer_than_frame(self):
        with pytest.raises(ConfigError):
            FeatureConfig(hop=500)

    def test_frame_longer_than_fft(self):
        with pytest.raises(ConfigError):
            FeatureConfig(frame_length=600)

    def test_n_mfcc_exceeds_n_mels(self):
        with pytest.raises(ConfigError):
            FeatureConfig(n_mfcc=200)
