"""Metrics, confusion matrices, latency and size measurement, report emission."""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dataset import EMOTIONS
from .errors import EvalError, LabelError

K_CLASSES = len(EMOTIONS)


def predict(logits: np.ndarray) -> np.ndarray:
    """Argmax over the last axis; ties break to the lowest index."""
    return np.asarray(logits).argmax(axis=-1)


def confusion(true: Sequence[int], pred: Sequence[int], k: int = K_CLASSES) -> np.ndarray:
    """k x k count matrix, rows = true class, cols = predicted."""
    true = np.asarray(true, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if true.shape != pred.shape:
        raise LabelError(f"length mismatch: {true.shape} vs {pred.shape}")
    for name, arr in (("true", true), ("pred", pred)):
        if arr.size and (arr.min() < 0 or arr.max() >= k):
            raise LabelError(f"{name} labels outside [0,{k})")
    cm = np.zeros((k, k), dtype=np.int64)
    np.add.at(cm, (true, pred), 1)
    return cm


def metrics(cm: np.ndarray) -> dict:
    """Accuracy plus macro precision/recall/F1 and per-class accuracy (= recall).

    Conventions: empty predicted column -> precision 0; class with no true
    samples is excluded from the macro means and reported as None.
    """
    cm = np.asarray(cm)
    total = int(cm.sum())
    if total == 0:
        raise EvalError("empty confusion matrix")
    k = cm.shape[0]
    diag = np.diag(cm).astype(np.float64)
    col = cm.sum(axis=0).astype(np.float64)
    row = cm.sum(axis=1).astype(np.float64)

    precision = np.where(col > 0, diag / np.maximum(col, 1), 0.0)
    present = row > 0
    recall = np.where(present, diag / np.maximum(row, 1), 0.0)
    denom = precision + recall
    f1 = np.where(denom > 0, 2 * precision * recall / np.maximum(denom, 1e-300), 0.0)

    per_class_accuracy = [float(recall[c]) if present[c] else None for c in range(k)]
    return {
        "accuracy": float(diag.sum() / total),
        "macro_precision": float(precision[present].mean()),
        "macro_recall": float(recall[present].mean()),
        "macro_f1": float(f1[present].mean()),
        "per_class_accuracy": per_class_accuracy,
    }


@dataclass
class EvalReport:
    model_name: str
    cm: np.ndarray
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    per_class_accuracy: list
    inference_ms_per_sample: float | None = None
    inference_ms_iqr: float | None = None
    model_size_mb: float | None = None
    head_size_mb: float | None = None
    n_parameters: int | None = None
    config_hash: str | None = None
    extra: dict = field(default_factory=dict)

    @staticmethod
    def from_predictions(model_name: str, true, pred, **kwargs) -> "EvalReport":
        cm = confusion(true, pred)
        m = metrics(cm)
        return EvalReport(model_name=model_name, cm=cm, **m, **kwargs)

    def to_dict(self) -> dict:
        d = {
            "model_name": self.model_name,
            "confusion_matrix": self.cm.tolist(),
            "accuracy": self.accuracy,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "per_class_accuracy": dict(zip(EMOTIONS, self.per_class_accuracy)),
            "inference_ms_per_sample": self.inference_ms_per_sample,
            "inference_ms_iqr": self.inference_ms_iqr,
            "model_size_mb": self.model_size_mb,
            "head_size_mb": self.head_size_mb,
            "n_parameters": self.n_parameters,
            "config_hash": self.config_hash,
        }
        d.update(self.extra)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def measure_inference(
    forward_one: Callable[[], np.ndarray],
    warmup: int = 10,
    reps: int = 100,
    clock: Callable[[], float] = time.perf_counter,
) -> tuple[float, float]:
    """Median and IQR of single-sample forward wall time in milliseconds."""
    for _ in range(warmup):
        forward_one()
    times = np.empty(reps)
    for i in range(reps):
        t0 = clock()
        forward_one()
        times[i] = (clock() - t0) * 1000.0
    q1, med, q3 = np.percentile(times, [25, 50, 75])
    return float(med), float(q3 - q1)


def model_size_mb(n_scalars: int) -> float:
    """float32 parameter payload in MB, rounded to 2 decimals."""
    return round(n_scalars * 4 / 2**20, 2)


# -- report files ---------------------------------------------------------


def emit_report(reports: list[EvalReport], out_dir: str):
    """Write report.json plus Table-1/2/3-shaped CSVs and per-model cm CSVs."""
    if not reports:
        raise EvalError("no reports to emit")
    os.makedirs(out_dir, exist_ok=True)

    with open(os.path.join(out_dir, "report.json"), "w") as f:
        f.write(json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True))

    # Table 1: model comparison
    lines = ["model,accuracy,macro_f1,macro_precision,macro_recall,ms_per_sample,size_mb"]
    for r in reports:
        lines.append(
            f"{r.model_name},{r.accuracy:.4f},{r.macro_f1:.4f},{r.macro_precision:.4f},"
            f"{r.macro_recall:.4f},{_fmt(r.inference_ms_per_sample)},{_fmt(r.model_size_mb)}"
        )
    _write(out_dir, "table1.csv", lines)

    # Table 2: per-emotion accuracy, one column per model
    lines = ["emotion," + ",".join(r.model_name for r in reports)]
    for c, emotion in enumerate(EMOTIONS):
        cells = [_fmt(r.per_class_accuracy[c], "{:.4f}") for r in reports]
        lines.append(f"{emotion}," + ",".join(cells))
    _write(out_dir, "table2.csv", lines)

    # Table 3: head ablation (meaningful when reports differ only in head)
    lines = ["head,accuracy,macro_f1,n_parameters,notes"]
    for r in reports:
        head = r.extra.get("head_kind", r.model_name)
        notes = r.extra.get("notes", "")
        lines.append(f"{head},{r.accuracy:.4f},{r.macro_f1:.4f},{_fmt(r.n_parameters, '{}')},{notes}")
    _write(out_dir, "table3.csv", lines)

    for r in reports:
        lines = ["true\\pred," + ",".join(EMOTIONS)]
        for c, emotion in enumerate(EMOTIONS):
            lines.append(f"{emotion}," + ",".join(str(int(v)) for v in r.cm[c]))
        _write(out_dir, f"cm_{r.model_name}.csv", lines)


def _fmt(value, spec: str = "{:.3f}") -> str:
    return "" if value is None else spec.format(value)


def _write(out_dir: str, name: str, lines: list[str]):
    with open(os.path.join(out_dir, name), "w") as f:
        f.write("\n".join(lines) + "\n")
