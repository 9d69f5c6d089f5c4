"""Confusion-matrix metrics and report rendering."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

FORMATS = ("plain_table", "csv", "json_lines")


def confusion_matrix(y_true, y_pred, num_classes: int) -> np.ndarray:
    """Counts with rows = true class, columns = predicted class."""
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true, np.intp), np.asarray(y_pred, np.intp)), 1)
    return cm


def _ratio(num, den):
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den > 0)
    return out


@dataclass
class EvalReport:
    confusion: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    accuracy: float
    weighted_f1: float
    macro_f1: float

    @classmethod
    def from_confusion(cls, cm) -> "EvalReport":
        cm = np.asarray(cm, dtype=np.int64)
        tp = np.diag(cm)
        support = cm.sum(axis=1)
        predicted = cm.sum(axis=0)
        precision = _ratio(tp, predicted)
        recall = _ratio(tp, support)
        f1 = _ratio(2 * precision * recall, precision + recall)
        total = cm.sum()
        # classes never seen nor predicted stay out of the macro mean
        present = (support > 0) | (predicted > 0)
        return cls(
            confusion=cm,
            precision=precision,
            recall=recall,
            f1=f1,
            support=support,
            accuracy=float(tp.sum() / total) if total else 0.0,
            weighted_f1=float((support * f1).sum() / support.sum()) if support.sum() else 0.0,
            macro_f1=float(f1[present].mean()) if present.any() else 0.0,
        )

    def to_dict(self) -> dict:
        return {
            "confusion": self.confusion.tolist(),
            "precision": self.precision.tolist(),
            "recall": self.recall.tolist(),
            "f1": self.f1.tolist(),
            "support": self.support.tolist(),
            "accuracy": self.accuracy,
            "weighted_f1": self.weighted_f1,
            "macro_f1": self.macro_f1,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls.from_confusion(np.array(d["confusion"], dtype=np.int64))


def argmax_lowest(logits: np.ndarray) -> np.ndarray:
    # np.argmax already returns the first maximal index
    return np.argmax(logits, axis=1)


def evaluate_predictions(y_true, logits, num_classes: int) -> EvalReport:
    return EvalReport.from_confusion(confusion_matrix(y_true, argmax_lowest(logits), num_classes))


COLUMNS = ("class", "precision", "recall", "f1", "support")


def _rows(report: EvalReport, label_names):
    for k, name in enumerate(label_names):
        yield name, report.precision[k], report.recall[k], report.f1[k], int(report.support[k])


def format_report(report: EvalReport | None, label_names, fmt: str = "plain_table") -> str:
    """Per-class table in label order followed by aggregates."""
    if fmt not in FORMATS:
        raise ConfigError(f"unknown report format {fmt!r}; choose from {FORMATS}")
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        if report is not None:
            for name, p, r, f, s in _rows(report, label_names):
                w.writerow([name, repr(float(p)), repr(float(r)), repr(float(f)), s])
            total = int(report.support.sum())
            w.writerow(["accuracy", "", "", repr(report.accuracy), total])
            w.writerow(["weighted_f1", "", "", repr(report.weighted_f1), total])
            w.writerow(["macro_f1", "", "", repr(report.macro_f1), total])
        return buf.getvalue()
    if fmt == "json_lines":
        if report is None:
            return ""
        lines = [json.dumps({"class": n, "precision": float(p), "recall": float(r), "f1": float(f), "support": s})
                 for n, p, r, f, s in _rows(report, label_names)]
        lines.append(json.dumps({"accuracy": report.accuracy, "weighted_f1": report.weighted_f1,
                                 "macro_f1": report.macro_f1, "support": int(report.support.sum())}))
        return "\n".join(lines) + "\n"
    width = max([len(n) for n in label_names] + [11])
    out = [f"{'class':<{width}}  precision  recall     f1  support"]
    if report is not None:
        for name, p, r, f, s in _rows(report, label_names):
            out.append(f"{name:<{width}}  {p:9.1%}  {r:6.1%}  {f:5.1%}  {s:7d}")
        total = int(report.support.sum())
        out.append(f"{'accuracy':<{width}}  {'':9}  {'':6}  {report.accuracy:5.1%}  {total:7d}")
        out.append(f"{'weighted F1':<{width}}  {'':9}  {'':6}  {report.weighted_f1:5.1%}  {total:7d}")
        out.append(f"{'macro F1':<{width}}  {'':9}  {'':6}  {report.macro_f1:5.1%}  {total:7d}")
    return "\n".join(out) + "\n"


def parse_csv_report(text: str) -> dict[str, dict]:
    """Inverse of the csv rendering, keyed by row name."""
    out = {}
    for row in csv.DictReader(io.StringIO(text)):
        out[row["class"]] = {k: float(v) if v else None for k, v in row.items() if k != "class"}
    return out
