"""Mini-batch training loop, evaluation and run logs."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import ops
from .data import Segments, SegmentSet
from .errors import DivergenceError, ShapeError
from .metrics import EvalReport, confusion_matrix, format_report
from .model import ModelParams, NetworkConfig, backward, forward, init_params, predict
from .optim import AdamState, TrainConfig, adam_step

log = logging.getLogger(__name__)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_accuracy: float
    test: EvalReport | None
    seconds: float = 0.0

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "train_loss": self.train_loss,
            "train_accuracy": self.train_accuracy,
            "test": self.test.to_dict() if self.test is not None else None,
            "seconds": self.seconds,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EpochRecord":
        test = EvalReport.from_dict(d["test"]) if d.get("test") else None
        return cls(d["epoch"], d["train_loss"], d["train_accuracy"], test, d.get("seconds", 0.0))


@dataclass
class RunLog:
    label_names: tuple[str, ...] = ()
    records: list[EpochRecord] = field(default_factory=list)
    selection: str = "best"
    selected_epoch: int | None = None

    def append(self, rec: EpochRecord):
        if self.records and rec.epoch <= self.records[-1].epoch:
            raise ValueError(f"epoch {rec.epoch} does not follow {self.records[-1].epoch}")
        self.records.append(rec)

    @property
    def best(self) -> EpochRecord | None:
        scored = [r for r in self.records if r.test is not None]
        if not scored:
            return None
        # earliest epoch wins ties
        return max(scored, key=lambda r: (r.test.weighted_f1, -r.epoch))

    @property
    def final(self) -> EpochRecord | None:
        return self.records[-1] if self.records else None

    @property
    def selected(self) -> EpochRecord | None:
        if self.selected_epoch is None:
            return None
        return next(r for r in self.records if r.epoch == self.selected_epoch)

    def fingerprint(self) -> list[dict]:
        """Everything except wall-clock time; equal for reproducible runs."""
        return [{k: v for k, v in r.to_dict().items() if k != "seconds"} for r in self.records]

    def to_jsonl(self) -> str:
        head = {"label_names": list(self.label_names), "selection": self.selection,
                "selected_epoch": self.selected_epoch}
        lines = [json.dumps({"run": head})]
        lines += [json.dumps(r.to_dict()) for r in self.records]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "RunLog":
        out = cls()
        for line in text.splitlines():
            if not line.strip():
                continue
            d = json.loads(line)
            if "run" in d:
                out.label_names = tuple(d["run"]["label_names"])
                out.selection = d["run"]["selection"]
                out.selected_epoch = d["run"]["selected_epoch"]
            else:
                out.append(EpochRecord.from_dict(d))
        return out


def epoch_permutation(seed: int, epoch: int, n: int) -> np.ndarray:
    return np.random.default_rng([seed, epoch]).permutation(n)


def evaluate(params: ModelParams, cfg: NetworkConfig, segments: Segments, batch_size: int = 1024) -> EvalReport:
    """Confusion matrix and per-class rates; argmax ties go to the lowest class index.

    Chunks are scored independently and their confusion matrices summed.
    """
    cm = np.zeros((cfg.num_classes, cfg.num_classes), dtype=np.int64)
    for i in range(0, len(segments), batch_size):
        logits = predict(params, cfg, segments.images[i:i + batch_size], batch_size)
        cm += confusion_matrix(segments.labels[i:i + batch_size], np.argmax(logits, axis=1), cfg.num_classes)
    return EvalReport.from_confusion(cm)


def train(ss: SegmentSet, cfg: NetworkConfig, tcfg: TrainConfig, params: ModelParams | None = None,
          callback=None) -> tuple[ModelParams, RunLog]:
    """Adam on cross-entropy + L2; returns the selected parameters and the run log.

    Each epoch shuffles the training set with a permutation drawn from
    ``(seed, epoch)``, trains every mini-batch including a short last one and
    scores the test split. ``tcfg.selection`` picks the final or the best
    (test weighted F1) epoch's parameters. ``callback(record)`` runs after
    every epoch; a true return value stops training early.
    """
    train_set = ss.train
    n = len(train_set)
    if n == 0:
        raise ValueError("training set is empty")
    s = cfg.input_shape
    if train_set.images.shape[1:] != (s.channels, s.rows, s.cols):
        raise ShapeError(f"segments {train_set.images.shape[1:]} do not fit network input "
                         f"{(s.channels, s.rows, s.cols)}")
    if params is None:
        params = init_params(cfg, tcfg.seed)
    elif not params.adam:
        params.adam = [AdamState.zeros_like(t) for t in params.tensors()]
    run = RunLog(tuple(ss.label_names), selection=tcfg.selection)
    best_params, best_score = None, -1.0
    has_test = len(ss.test) > 0

    for epoch in range(1, tcfg.epochs + 1):
        t0 = time.perf_counter()
        perm = epoch_permutation(tcfg.seed, epoch, n)
        sample_loss = np.empty(n)
        correct = np.zeros(n, dtype=bool)
        for step, start in enumerate(range(0, n, tcfg.batch_size), start=1):
            idx = perm[start:start + tcfg.batch_size]
            x = train_set.images[idx]
            y = train_set.labels[idx]
            logits, cache = forward(params, cfg, x)
            losses, probs = ops.softmax_xent_per_sample(logits, y)
            l2 = ops.l2_penalty(params.weights, tcfg.l2_lambda)[0] if tcfg.l2_lambda else 0.0
            loss = float(losses.mean()) + l2
            if not np.isfinite(loss):
                raise DivergenceError(epoch, step, loss)
            grads = backward(params, cfg, cache, ops.softmax_xent_backward(probs, y), tcfg.l2_lambda)
            # stored per sample so the epoch mean does not depend on batch composition
            sample_loss[idx] = losses + l2
            correct[idx] = np.argmax(logits, axis=1) == y
            tensors = params.tensors()
            new = []
            for i, (p, g) in enumerate(zip(tensors, grads)):
                p2, params.adam[i] = adam_step(p, g, params.adam[i], tcfg)
                new.append(p2)
            params.set_tensors(new)
        train_loss = float(np.sum(sample_loss) / n)
        if not np.isfinite(train_loss):
            raise DivergenceError(epoch, step, train_loss)
        report = evaluate(params, cfg, ss.test) if has_test else None
        rec = EpochRecord(epoch, train_loss, float(correct.mean()), report, time.perf_counter() - t0)
        run.append(rec)
        log.info("epoch %d loss %.5f train acc %.4f%s (%.1fs)", epoch, train_loss, rec.train_accuracy,
                 f" test wF1 {report.weighted_f1:.4f}" if report else "", rec.seconds)
        if report is not None and report.weighted_f1 > best_score:
            best_score = report.weighted_f1
            best_params = params.copy()
            best_epoch = epoch
        if callback is not None and callback(rec):
            break

    if tcfg.selection == "best" and best_params is not None:
        run.selected_epoch = best_epoch
        return best_params, run
    run.selected_epoch = run.final.epoch if run.records else None
    return params, run


def report(run: RunLog, fmt: str = "plain_table") -> str:
    """Per-class table of the selected epoch's test scores; header only for an empty log."""
    rec = run.selected or run.final
    return format_report(rec.test if rec is not None else None, run.label_names, fmt)
