import json
import os

import numpy as np
import pytest

from ser_forge.audio_io import Waveform
from ser_forge.config import config_from_dict
from ser_forge.dataset import synthesize_toy_dataset
from ser_forge.errors import ConfigError
from ser_forge.experiment import (
    ModelBundle,
    data_order_hash,
    evaluate_checkpoint,
    featurize_split,
    featurize_waveform,
    load_dataset,
    run_experiment,
)

TINY_PASST = {
    "dataset": {"toy_n_per_class": 6},
    "model": {"family": "passt", "embed_dim": 32, "n_blocks": 1, "n_heads": 2},
    "head": {"kind": "linear"},
    "train": {"max_epochs": 1, "batch_size": 8, "lr0": 1e-3},
}


class TestFeaturize:
    def test_family_specific_features(self):
        w = Waveform(np.random.default_rng(0).uniform(-1, 1, 32000).astype(np.float32), 16000)
        passt_cfg = config_from_dict({"model": {"family": "passt"}})
        assert featurize_waveform(w, passt_cfg).shape == (198, 128)
        cnn_cfg = config_from_dict({"model": {"family": "cnn_lstm"}})
        assert featurize_waveform(w, cnn_cfg).shape == (198, 40)
        wave_cfg = config_from_dict({"model": {"family": "wave_encoder"}})
        assert featurize_waveform(w, wave_cfg).shape == (32000,)

    def test_split_stacking(self):
        cfg = config_from_dict(TINY_PASST)
        samples = synthesize_toy_dataset(2, np.random.default_rng(0))
        x, y = featurize_split(samples, cfg)
        assert x.shape == (12, 198, 128)
        assert y.tolist() == [s.label for s in samples]

    def test_cache_hit_returns_identical_features(self, tmp_path, monkeypatch):
        monkeypatch.setenv("SER_FORGE_CACHE", str(tmp_path))
        cfg = config_from_dict(TINY_PASST)
        samples = synthesize_toy_dataset(2, np.random.default_rng(1))
        x1, _ = featurize_split(samples, cfg)
        cached = os.listdir(tmp_path)
        assert len(cached) == 1 and cached[0].endswith(".npy")
        x2, _ = featurize_split(samples, cfg)
        assert np.array_equal(x1, x2)

    def test_cache_key_depends_on_family(self, tmp_path, monkeypatch):
        monkeypatch.setenv("SER_FORGE_CACHE", str(tmp_path))
        samples = synthesize_toy_dataset(1, np.random.default_rng(2))
        featurize_split(samples, config_from_dict({"model": {"family": "passt"}}))
        featurize_split(samples, config_from_dict({"model": {"family": "cnn_lstm"}}))
        assert len(os.listdir(tmp_path)) == 2


class TestLoadDataset:
    def test_toy_split_sizes_and_disjoint_actors(self):
        cfg = config_from_dict({"dataset": {"toy_n_per_class": 20}})
        data = load_dataset(cfg)
        total = len(data.train) + len(data.val) + len(data.test)
        assert total == 120
        assert abs(len(data.train) / total - 0.70) < 0.05
        train_actors = {s.actor_id for s in data.train}
        assert not train_actors & {s.actor_id for s in data.val}
        assert not train_actors & {s.actor_id for s in data.test}

    def test_split_json_present(self):
        cfg = config_from_dict({"dataset": {"toy_n_per_class": 5}})
        data = load_dataset(cfg)
        blob = json.loads(data.split_json)
        assert set(blob) >= {"seed", "train_actors", "val_actors", "test_actors"}


class TestModelBundle:
    def test_passt_bundle_forward(self):
        cfg = config_from_dict(TINY_PASST)
        bundle = ModelBundle(cfg, (198, 128))
        x = np.random.default_rng(0).uniform(-1, 1, (3, 198, 128)).astype(np.float32)
        out = bundle.forward(bundle.params, x, False, None)
        assert out.shape == (3, 6)

    def test_cnn_bundle_head_param_names(self):
        cfg = config_from_dict({"model": {"family": "cnn_lstm"}})
        bundle = ModelBundle(cfg, (198, 40))
        assert bundle.head_param_names() == ["fc.w", "fc.b"]

    def test_passt_head_param_names(self):
        cfg = config_from_dict(TINY_PASST)
        bundle = ModelBundle(cfg, (198, 128))
        assert all(n.startswith("head.") for n in bundle.head_param_names())
        assert bundle.head_param_names()


class TestDataOrderHash:
    def test_independent_of_model_settings(self):
        a = config_from_dict({**TINY_PASST, "head": {"kind": "mlp"}})
        b = config_from_dict({**TINY_PASST, "head": {"kind": "linear"}})
        assert data_order_hash(100, a.train) == data_order_hash(100, b.train)

    def test_sensitive_to_seed_and_size(self):
        a = config_from_dict({**TINY_PASST, "seed": 0})
        b = config_from_dict({**TINY_PASST, "seed": 1})
        assert data_order_hash(100, a.train) != data_order_hash(100, b.train)
        assert data_order_hash(100, a.train) != data_order_hash(101, a.train)


class TestRunExperiment:
    def test_artifacts_and_checkpoint_eval(self, tmp_path):
        cfg = config_from_dict(TINY_PASST)
        out = str(tmp_path / "run")
        report, history = run_experiment(cfg, out, log=lambda s: None, measure_latency=False)
        for name in (
            "config.json",
            "split.json",
            "history.json",
            "history.csv",
            "checkpoint.serf",
            "report.json",
            "table1.csv",
            "table2.csv",
            "table3.csv",
        ):
            assert os.path.exists(os.path.join(out, name)), name
        assert len(history.train_loss) == 1
        assert 0.0 <= report.accuracy <= 1.0
        assert report.n_parameters == ModelBundle(cfg, (198, 128)).params.n_scalars()

        # reloading the checkpoint reproduces the test-split predictions
        again = evaluate_checkpoint(cfg, os.path.join(out, "checkpoint.serf"), "test")
        assert again.accuracy == pytest.approx(report.accuracy)
        assert np.array_equal(again.cm, report.cm)

    def test_eval_bad_split_name(self, tmp_path):
        cfg = config_from_dict(TINY_PASST)
        with pytest.raises(ConfigError):
            evaluate_checkpoint(cfg, str(tmp_path / "x.serf"), "holdout")
