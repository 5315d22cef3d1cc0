"""Mini-batch training with Adam/SGD, epoch-level validation and checkpointing."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import DatasetSplit, TaskMode, UtteranceRecord, task_target
from .metrics import MetricsReport, multi_way_report, two_way_report
from .model import QuestionDetector

log = logging.getLogger(__name__)

SELECTION_METRICS = ("accuracy", "macro_f1")


class TrainError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    epochs: int = 20
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    selection_metric: str = "accuracy"
    # linear warmup over this many optimizer steps; 0 disables it
    warmup_steps: int = 0

    def __post_init__(self):
        if self.batch_size <= 0:
            raise TrainError("batch_size must be positive")
        if self.epochs < 0:
            raise TrainError("epochs must be nonnegative")
        if not self.learning_rate > 0:
            raise TrainError("learning_rate must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise TrainError(f"unknown optimizer {self.optimizer!r}")
        if self.selection_metric not in SELECTION_METRICS:
            raise TrainError(f"selection_metric must be one of {SELECTION_METRICS}")
        if self.warmup_steps < 0:
            raise TrainError("warmup_steps must be nonnegative")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise TrainError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**obj)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float  # mean of the mini-batch losses seen during the epoch
    eval_train_loss: float  # full train-set loss after the epoch, dropout off
    val_loss: float
    val_metric: float


@dataclass
class TrainReport:
    selection_metric: str
    initial_train_loss: float | None = None
    history: list[EpochRecord] = field(default_factory=list)
    best_epoch: int | None = None
    best_metric: float | None = None
    best_checkpoint_path: str | None = None
    error: str | None = None

    def to_json(self) -> dict:
        out = asdict(self)
        out["history"] = [asdict(h) for h in self.history]
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """In-place bias-corrected Adam update of every array in ``params``.

    ``state`` is a dict owned by the caller; it holds the step count and the
    first/second moment estimates, created on first use.
    """
    if params.keys() != grads.keys():
        raise ValueError("params and grads have different keys")
    t = state.get("t", 0) + 1
    state["t"] = t
    m = state.setdefault("m", {})
    v = state.setdefault("v", {})
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape} for {k}")
        if k not in m:
            m[k] = np.zeros_like(p)
            v[k] = np.zeros_like(p)
        m[k] *= beta1
        m[k] += (1.0 - beta1) * g
        v[k] *= beta2
        v[k] += (1.0 - beta2) * (g * g)
        p -= lr * (m[k] / bc1) / (np.sqrt(v[k] / bc2) + eps)
    return params, state


def sgd_step(params, grads, lr):
    for k, p in params.items():
        p -= lr * grads[k]
    return params


def select_best(history: Sequence[float]) -> int:
    """Index of the largest value; the earliest one on ties."""
    if len(history) == 0:
        raise TrainError("empty history")
    return int(np.argmax(np.asarray(history, dtype=float)))


def targets_for(records: Sequence[UtteranceRecord], task: TaskMode) -> np.ndarray:
    out = []
    for r in records:
        if r.final_label is None:
            raise TrainError(f"record {r.id!r} has no final_label")
        out.append(task_target(r.final_label, task))
    return np.array(out, dtype=np.int64)


@dataclass
class Evaluation:
    probs: np.ndarray
    targets: np.ndarray
    report: MetricsReport
    loss: float


def evaluate(model, records: Sequence[UtteranceRecord]) -> Evaluation:
    """Score ``model`` (detector or baseline) on labeled records."""
    if not records:
        raise TrainError("cannot evaluate on an empty set")
    targets = targets_for(records, model.task)
    probs = model.predict_proba([r.text for r in records])
    preds = np.argmax(probs, axis=1)
    if model.task is TaskMode.TWO_WAY:
        report = two_way_report(targets, preds, probs[:, 0], positive=0, labels=model.labels)
    else:
        report = multi_way_report(targets, preds, model.labels)
    idx = np.arange(len(targets))
    clipped = np.clip(probs, 1e-12, 1 - 1e-12)
    if model.task is TaskMode.TWO_WAY:
        loss = float(-np.log(clipped[idx, targets]).mean())
    else:
        onehot = np.zeros_like(probs)
        onehot[idx, targets] = 1.0
        loss = float(-(onehot * np.log(clipped) + (1 - onehot) * np.log1p(-clipped)).sum(axis=1).mean())
    return Evaluation(probs, targets, report, loss)


def _dataset_loss(model: QuestionDetector, records: Sequence[UtteranceRecord]) -> float:
    return evaluate(model, records).loss


def train(
    model: QuestionDetector,
    data: DatasetSplit,
    tcfg: TrainConfig,
    out_dir: str | Path | None = None,
    checkpoint_name: str = "best.ckpt",
) -> TrainReport:
    """Train ``model`` in place and leave it holding the best-validation weights.

    With ``out_dir`` set, the model is also saved there as ``checkpoint_name``
    on every validation improvement.
    """
    report = TrainReport(selection_metric=tcfg.selection_metric)
    if not data.train:
        raise TrainError("empty train split")
    if tcfg.epochs == 0:
        report.error = "epochs=0: nothing trained"
        return report
    val_records = data.validation or data.train
    if not data.validation:
        log.warning("no validation records; selecting on the training set")
    ckpt_path = Path(out_dir) / checkpoint_name if out_dir is not None else None

    rng = np.random.default_rng(tcfg.seed)
    ids_all, mask_all = model.encode([r.text for r in data.train])
    y_all = targets_for(data.train, model.task)
    params = model.parameters()
    state: dict = {}
    report.initial_train_loss = _dataset_loss(model, data.train)
    step = 0
    best = -np.inf
    best_params = None
    for epoch in range(tcfg.epochs):
        order = rng.permutation(len(y_all))
        losses = []
        for start in range(0, len(order), tcfg.batch_size):
            idx = order[start : start + tcfg.batch_size]
            loss, grads = model.loss_and_grads(ids_all[idx], mask_all[idx], y_all[idx], training=True, rng=rng)
            losses.append(loss)
            step += 1
            lr = tcfg.learning_rate
            if tcfg.warmup_steps:
                lr *= min(1.0, step / tcfg.warmup_steps)
            if tcfg.optimizer == "adam":
                adam_step(params, grads, state, lr, tcfg.beta1, tcfg.beta2, tcfg.adam_eps)
            else:
                sgd_step(params, grads, lr)
        val = evaluate(model, val_records)
        metric = val.report.metric(tcfg.selection_metric)
        rec = EpochRecord(
            epoch=epoch,
            train_loss=float(np.mean(losses)),
            eval_train_loss=_dataset_loss(model, data.train),
            val_loss=val.loss,
            val_metric=metric,
        )
        report.history.append(rec)
        log.info(
            "epoch %d train_loss %.4f val_loss %.4f val_%s %.4f",
            epoch, rec.train_loss, rec.val_loss, tcfg.selection_metric, metric,
        )
        if metric > best:
            best = metric
            report.best_epoch = epoch
            report.best_metric = metric
            best_params = {k: v.copy() for k, v in params.items()}
            if ckpt_path is not None:
                model.save(ckpt_path, extra={"train": {"epoch": epoch, tcfg.selection_metric: metric}})
                report.best_checkpoint_path = str(ckpt_path)
    assert report.best_epoch == select_best([h.val_metric for h in report.history])
    for k, v in best_params.items():
        params[k][...] = v
    return report
