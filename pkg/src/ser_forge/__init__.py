"""ser-forge: speech emotion recognition experiment toolkit.

Pipeline: WAV decoding and canonicalization, seed-driven augmentation,
log-Mel/MFCC features, three model families (patch spectrogram transformer
with patchout, raw-waveform conv+transformer encoder, CNN-LSTM baseline),
three interchangeable classification heads, a reproducible training
protocol, and an evaluation/reporting harness.
"""

__version__ = "0.1.0"
