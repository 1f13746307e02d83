import json
import os
import struct

import numpy as np
import pytest

from ser_forge.cli import main


def write_tone_wav(path, seconds=1.0, freq=440.0, rate=16000):
    n = int(seconds * rate)
    t = np.arange(n) / rate
    pcm = np.clip(np.round(0.5 * np.sin(2 * np.pi * freq * t) * 32768), -32768, 32767).astype("<i2")
    body = pcm.tobytes()
    header = b"RIFF" + struct.pack("<I", 36 + len(body)) + b"WAVE"
    header += b"fmt " + struct.pack("<IHHIIHH", 16, 1, 1, rate, rate * 2, 2, 16)
    header += b"data" + struct.pack("<I", len(body))
    with open(path, "wb") as f:
        f.write(header + body)


TINY_TOML = """
[dataset]
toy_n_per_class = 6

[model]
family = "passt"
embed_dim = 32
n_blocks = 1
n_heads = 2

[head]
kind = "linear"

[train]
max_epochs = 1
batch_size = 8
lr0 = 1e-3
"""


class TestPrepare:
    def test_toy_prints_split_table(self, tmp_path, capsys):
        rc = main(["prepare", "--toy", "12", "--out", str(tmp_path), "--seed", "1"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "72 samples" in out
        assert "train" in out and "val" in out and "test" in out
        assert (tmp_path / "manifest.csv").exists()
        assert (tmp_path / "split.json").exists()

    def test_requires_source(self, tmp_path, capsys):
        rc = main(["prepare", "--out", str(tmp_path)])
        assert rc == 2
        assert "error[config]:" in capsys.readouterr().err

    def test_data_dir_with_crema_names(self, tmp_path, capsys):
        data = tmp_path / "wavs"
        data.mkdir()
        for a in (1001, 1002, 1003, 1004):
            for code in ("ANG", "HAP", "SAD"):
                write_tone_wav(str(data / f"{a}_IEO_{code}_XX.wav"), seconds=0.05)
        out = tmp_path / "prep"
        rc = main(["prepare", "--data-dir", str(data), "--out", str(out)])
        assert rc == 0
        captured = capsys.readouterr()
        assert "12 samples, 4 actors" in captured.out
        # not the full corpus -> advisory on stderr
        assert "7442" in captured.err


class TestTrain:
    def test_dry_run(self, tmp_path, capsys):
        cfg = tmp_path / "exp.toml"
        cfg.write_text(TINY_TOML)
        rc = main(["train", "--config", str(cfg), "--dry-run"])
        assert rc == 0
        assert "dry run ok" in capsys.readouterr().out

    def test_full_tiny_run(self, tmp_path, capsys):
        cfg = tmp_path / "exp.toml"
        cfg.write_text(TINY_TOML)
        out = tmp_path / "run"
        rc = main(["train", "--config", str(cfg), "--out", str(out)])
        assert rc == 0
        assert (out / "checkpoint.serf").exists()
        assert (out / "report.json").exists()

    def test_missing_config_file_io_error(self, tmp_path, capsys):
        rc = main(["train", "--config", str(tmp_path / "absent.toml")])
        assert rc == 3
        assert "error[io]:" in capsys.readouterr().err

    def test_invalid_config_exit_code(self, tmp_path, capsys):
        cfg = tmp_path / "bad.toml"
        cfg.write_text('[head]\nkind = "gru"\n')
        rc = main(["train", "--config", str(cfg)])
        assert rc == 2
        err = capsys.readouterr().err
        assert err.startswith("error[config]:")
        assert "head.kind" in err


class TestEval:
    def test_checkpoint_roundtrip_via_cli(self, tmp_path, capsys):
        cfg = tmp_path / "exp.toml"
        cfg.write_text(TINY_TOML)
        out = tmp_path / "run"
        assert main(["train", "--config", str(cfg), "--out", str(out)]) == 0
        capsys.readouterr()
        rc = main(["eval", "--checkpoint", str(out / "checkpoint.serf"), "--config", str(cfg), "--split", "val"])
        assert rc == 0
        blob = json.loads(capsys.readouterr().out)
        assert "accuracy" in blob
        assert len(blob["confusion_matrix"]) == 6

    def test_corrupt_checkpoint(self, tmp_path, capsys):
        cfg = tmp_path / "exp.toml"
        cfg.write_text(TINY_TOML)
        bad = tmp_path / "bad.serf"
        bad.write_bytes(b"JUNKJUNKJUNKJUNK")
        rc = main(["eval", "--checkpoint", str(bad), "--config", str(cfg)])
        assert rc == 2
        assert "error[checkpoint]:" in capsys.readouterr().err


class TestFeaturize:
    def test_binary_plus_sidecar(self, tmp_path, capsys):
        wav = tmp_path / "tone.wav"
        write_tone_wav(str(wav))
        out = tmp_path / "feats.bin"
        rc = main(["featurize", "--in", str(wav), "--out", str(out)])
        assert rc == 0
        sidecar = json.loads((tmp_path / "feats.bin.json").read_text())
        assert sidecar["shape"] == [998, 128]
        assert sidecar["dtype"] == "float32-le"
        data = np.fromfile(out, dtype="<f4")
        assert data.size == 998 * 128
        assert np.all(np.isfinite(data))

    def test_undecodable_input(self, tmp_path, capsys):
        bad = tmp_path / "noise.wav"
        bad.write_bytes(b"not a riff file at all")
        rc = main(["featurize", "--in", str(bad), "--out", str(tmp_path / "x.bin")])
        assert rc == 2
        assert "error[decode]:" in capsys.readouterr().err


class TestAugmentPreview:
    def test_writes_wav_deterministically(self, tmp_path, capsys):
        wav = tmp_path / "tone.wav"
        write_tone_wav(str(wav))
        out_a = tmp_path / "a.wav"
        out_b = tmp_path / "b.wav"
        assert main(["augment-preview", "--in", str(wav), "--out", str(out_a), "--seed", "5"]) == 0
        assert main(["augment-preview", "--in", str(wav), "--out", str(out_b), "--seed", "5"]) == 0
        assert out_a.read_bytes() == out_b.read_bytes()

    def test_different_seeds_differ(self, tmp_path, capsys):
        wav = tmp_path / "tone.wav"
        write_tone_wav(str(wav))
        out_a = tmp_path / "a.wav"
        out_b = tmp_path / "b.wav"
        main(["augment-preview", "--in", str(wav), "--out", str(out_a), "--seed", "1"])
        main(["augment-preview", "--in", str(wav), "--out", str(out_b), "--seed", "2"])
        assert out_a.read_bytes() != out_b.read_bytes()
