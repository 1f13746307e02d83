import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ser_forge.errors import EvalError, LabelError
from ser_forge.evaluate import (
    EvalReport,
    confusion,
    emit_report,
    measure_inference,
    metrics,
    model_size_mb,
    predict,
)


class TestPredict:
    def test_argmax(self):
        logits = np.array([[0.1, 0.9, 0.0], [2.0, -1.0, 1.0]])
        assert predict(logits).tolist() == [1, 0]

    def test_tie_breaks_low(self):
        assert predict(np.array([[1.0, 1.0, 0.5]])).tolist() == [0]


class TestConfusion:
    def test_hand_counts(self):
        cm = confusion([0, 0, 1, 1, 2], [0, 1, 1, 1, 0], k=3)
        assert cm.tolist() == [[1, 1, 0], [0, 2, 0], [1, 0, 0]]

    def test_rows_are_true_class(self):
        cm = confusion([2], [5])
        assert cm[2, 5] == 1
        assert cm.sum() == 1

    def test_length_mismatch(self):
        with pytest.raises(LabelError):
            confusion([0, 1], [0])

    def test_out_of_range(self):
        with pytest.raises(LabelError):
            confusion([0, 9], [0, 0])

    @given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)), min_size=1, max_size=60))
    @settings(max_examples=40, deadline=None)
    def test_total_preserved_and_diag_is_agreement(self, pairs):
        true = [p[0] for p in pairs]
        pred = [p[1] for p in pairs]
        cm = confusion(true, pred)
        assert cm.sum() == len(pairs)
        assert np.trace(cm) == sum(t == p for t, p in pairs)


class TestMetrics:
    def test_pinned_two_class_oracle(self):
        # cm = [[3,1],[2,4]]: hand-derived values, frozen
        cm = np.zeros((6, 6), dtype=np.int64)
        cm[0, 0], cm[0, 1], cm[1, 0], cm[1, 1] = 3, 1, 2, 4
        m = metrics(cm)
        assert m["accuracy"] == pytest.approx(7 / 10)
        assert m["macro_precision"] == pytest.approx((3 / 5 + 4 / 5) / 2)
        assert m["macro_recall"] == pytest.approx((3 / 4 + 4 / 6) / 2)
        p0, r0 = 3 / 5, 3 / 4
        p1, r1 = 4 / 5, 4 / 6
        f0 = 2 * p0 * r0 / (p0 + r0)
        f1 = 2 * p1 * r1 / (p1 + r1)
        assert m["macro_f1"] == pytest.approx((f0 + f1) / 2)
        assert m["per_class_accuracy"][0] == pytest.approx(3 / 4)
        assert m["per_class_accuracy"][2] is None  # absent class

    def test_perfect_predictions(self):
        cm = np.diag([5, 5, 5, 5, 5, 5])
        m = metrics(cm)
        assert m["accuracy"] == 1.0
        assert m["macro_f1"] == 1.0
        assert all(a == 1.0 for a in m["per_class_accuracy"])

    def test_empty_predicted_column_precision_zero(self):
        # everything predicted as class 0; class 1 has true samples but no
        # predictions, so its precision contributes 0 to the macro mean
        cm = np.zeros((6, 6), dtype=np.int64)
        cm[0, 0] = 4
        cm[1, 0] = 4
        m = metrics(cm)
        assert m["macro_precision"] == pytest.approx((4 / 8 + 0.0) / 2)
        assert m["macro_recall"] == pytest.approx((1.0 + 0.0) / 2)

    def test_per_class_accuracy_equals_recall_rowwise(self):
        rng = np.random.default_rng(0)
        cm = rng.integers(0, 20, (6, 6))
        m = metrics(cm)
        for c in range(6):
            row = cm[c].sum()
            if row:
                assert m["per_class_accuracy"][c] == pytest.approx(cm[c, c] / row)

    def test_empty_matrix_rejected(self):
        with pytest.raises(EvalError):
            metrics(np.zeros((6, 6), dtype=np.int64))

    def test_dual_path_oracle_random_matrices(self):
        # recompute every metric with an independent per-class loop
        rng = np.random.default_rng(1)
        for _ in range(20):
            cm = rng.integers(0, 15, (6, 6))
            if cm.sum() == 0:
                continue
            m = metrics(cm)
            precs, recs, f1s = [], [], []
            for c in range(6):
                row, col = cm[c].sum(), cm[:, c].sum()
                if row == 0:
                    continue
                p = cm[c, c] / col if col else 0.0
                r = cm[c, c] / row
                precs.append(p)
                recs.append(r)
                f1s.append(2 * p * r / (p + r) if p + r else 0.0)
            assert m["macro_precision"] == pytest.approx(np.mean(precs))
            assert m["macro_recall"] == pytest.approx(np.mean(recs))
            assert m["macro_f1"] == pytest.approx(np.mean(f1s))
            assert m["accuracy"] == pytest.approx(np.trace(cm) / cm.sum())


class TestEvalReport:
    def test_from_predictions(self):
        r = EvalReport.from_predictions("demo", [0, 1, 1], [0, 1, 0], n_parameters=10)
        assert r.accuracy == pytest.approx(2 / 3)
        assert r.cm[1, 0] == 1
        assert r.n_parameters == 10

    def test_json_structure(self):
        r = EvalReport.from_predictions("demo", [0, 1], [0, 1], model_size_mb=1.5, extra={"head_kind": "mlp"})
        blob = json.loads(r.to_json())
        assert blob["model_name"] == "demo"
        assert blob["confusion_matrix"][0][0] == 1
        assert blob["head_kind"] == "mlp"
        assert set(blob["per_class_accuracy"]) == {"angry", "disgust", "fear", "happy", "neutral", "sad"}


class TestLatency:
    def test_median_and_iqr_from_injected_clock(self):
        # scripted clock: every rep takes 2 ms except one 10x outlier
        times = []
        t = [0.0]
        durations = [0.002] * 100
        durations[50] = 0.02

        calls = {"i": 0, "phase": 0}

        def clock():
            return t[0]

        def forward_one():
            # advance the clock only during timed reps (after warmup)
            if calls["phase"] == 1:
                t[0] += durations[min(calls["i"], 99)]
                calls["i"] += 1
            return np.zeros(1)

        # run warmup manually: measure_inference calls forward warmup times first
        def forward_wrapper():
            if calls["warmup_left"] > 0:
                calls["warmup_left"] -= 1
                return np.zeros(1)
            calls["phase"] = 1
            return forward_one()

        calls["warmup_left"] = 10
        med, iqr = measure_inference(forward_wrapper, warmup=10, reps=100, clock=clock)
        assert med == pytest.approx(2.0, rel=0.01)
        assert iqr == pytest.approx(0.0, abs=0.05)

    def test_real_clock_smoke(self):
        med, iqr = measure_inference(lambda: np.zeros(8), warmup=2, reps=20)
        assert med >= 0.0
        assert iqr >= 0.0


class TestModelSize:
    def test_float32_payload(self):
        assert model_size_mb(2**20) == 4.0
        assert model_size_mb(0) == 0.0

    def test_rounded_two_decimals(self):
        assert model_size_mb(467206) == round(467206 * 4 / 2**20, 2)


class TestEmitReport:
    def _report(self, name, head="mlp"):
        rng = np.random.default_rng(hash(name) % 2**32)
        true = rng.integers(0, 6, 60)
        pred = np.where(rng.uniform(size=60) < 0.7, true, rng.integers(0, 6, 60))
        return EvalReport.from_predictions(
            name, true, pred, inference_ms_per_sample=1.5, model_size_mb=2.0, n_parameters=100, extra={"head_kind": head}
        )

    def test_files_written(self, tmp_path):
        reports = [self._report("passt", "linear"), self._report("cnn_lstm", "mlp")]
        emit_report(reports, str(tmp_path))
        for name in ("report.json", "table1.csv", "table2.csv", "table3.csv", "cm_passt.csv", "cm_cnn_lstm.csv"):
            assert (tmp_path / name).exists(), name

    def test_table_shapes(self, tmp_path):
        reports = [self._report(n, h) for n, h in (("a", "linear"), ("b", "mlp"), ("c", "attentive_pool"))]
        emit_report(reports, str(tmp_path))
        t1 = (tmp_path / "table1.csv").read_text().strip().split("\n")
        assert len(t1) == 4
        t2 = (tmp_path / "table2.csv").read_text().strip().split("\n")
        assert len(t2) == 7  # header + 6 emotions
        t3 = (tmp_path / "table3.csv").read_text().strip().split("\n")
        assert t3[0].startswith("head,")
        assert [line.split(",")[0] for line in t3[1:]] == ["linear", "mlp", "attentive_pool"]

    def test_cm_csv_matches_matrix(self, tmp_path):
        r = self._report("solo")
        emit_report([r], str(tmp_path))
        lines = (tmp_path / "cm_solo.csv").read_text().strip().split("\n")[1:]
        parsed = np.array([[int(v) for v in line.split(",")[1:]] for line in lines])
        assert np.array_equal(parsed, r.cm)

    def test_empty_rejected(self, tmp_path):
        with pytest.raises(EvalError):
            emit_report([], str(tmp_path))
