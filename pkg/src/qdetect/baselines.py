"""Averaged-embedding baselines: multinomial logistic regression and k-NN.

Sentence features are the mean of the token embeddings of the words in the
utterance, which throws away word order entirely. The embedding table is
taken, frozen, from a trained detector.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .corpus import TaskMode
from .tasks import Prediction, softmax
from .text import CLS_ID, PAD_ID, TokenSequence, Vocabulary, tokenize


def avg_embed(tokens: TokenSequence | Sequence[int], embedding: np.ndarray) -> np.ndarray:
    """Mean embedding of the non-PAD, non-CLS ids; the zero vector if there are none."""
    ids = tokens.ids if isinstance(tokens, TokenSequence) else tokens
    ids = np.asarray(ids, dtype=np.int64)
    ids = ids[(ids != PAD_ID) & (ids != CLS_ID)]
    if ids.size == 0:
        return np.zeros(embedding.shape[1])
    return embedding[ids].mean(axis=0)


def featurize(texts: Sequence[str], vocab: Vocabulary, embedding: np.ndarray) -> np.ndarray:
    """Averaged-embedding features ``[N, d]``; no length truncation."""
    out = np.zeros((len(texts), embedding.shape[1]))
    for i, t in enumerate(texts):
        out[i] = avg_embed([vocab.id(tok) for tok in tokenize(t, vocab.mode)], embedding)
    return out


@dataclass
class LRModel:
    weight: np.ndarray  # [d, K]
    bias: np.ndarray  # [K]


def lr_predict_proba(model: LRModel, features: np.ndarray) -> np.ndarray:
    return softmax(np.atleast_2d(features) @ model.weight + model.bias)


def lr_predict(model: LRModel, feature: np.ndarray) -> Prediction:
    p = lr_predict_proba(model, feature)[0]
    return Prediction(p, int(np.argmax(p)))


def lr_objective(model: LRModel, features: np.ndarray, labels: np.ndarray, l2: float) -> float:
    p = lr_predict_proba(model, features)
    ce = -np.log(np.clip(p[np.arange(len(labels)), labels], 1e-300, None)).mean()
    return float(ce + 0.5 * l2 * np.sum(model.weight**2))


def lr_train(
    features: np.ndarray,
    labels: Sequence[int],
    K: int,
    lr: float = 0.5,
    epochs: int = 500,
    l2: float = 1e-4,
) -> LRModel:
    """Full-batch gradient descent on mean cross-entropy + (l2/2)·||W||²."""
    if K < 2:
        raise ValueError("logistic regression needs K >= 2 classes")
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or len(x) != len(y):
        raise ValueError("features must be [N, d] with one label per row")
    model = LRModel(np.zeros((x.shape[1], K)), np.zeros(K))
    onehot = np.zeros((len(y), K))
    onehot[np.arange(len(y)), y] = 1.0
    n = len(y)
    for _ in range(epochs):
        delta = (lr_predict_proba(model, x) - onehot) / n
        model.weight -= lr * (x.T @ delta + l2 * model.weight)
        model.bias -= lr * delta.sum(axis=0)
    return model


@dataclass
class KNNModel:
    features: np.ndarray  # [N, d]
    labels: np.ndarray  # [N]
    num_classes: int
    k: int = 5

    def __post_init__(self):
        if len(self.features) == 0:
            raise ValueError("k-NN model has no stored examples")
        if not 1 <= self.k <= len(self.features):
            raise ValueError(f"k={self.k} must be in [1, {len(self.features)}]")


def knn_predict_proba(model: KNNModel, features: np.ndarray) -> np.ndarray:
    q = np.atleast_2d(features)
    out = np.zeros((len(q), model.num_classes))
    for i, query in enumerate(q):
        d2 = ((model.features - query) ** 2).sum(axis=1)
        # stable sort: equal distances keep the lower stored index first
        nearest = np.argsort(d2, kind="stable")[: model.k]
        out[i] = np.bincount(model.labels[nearest], minlength=model.num_classes) / model.k
    return out


def knn_predict(model: KNNModel, feature: np.ndarray) -> Prediction:
    if len(model.features) == 0:
        raise ValueError("empty k-NN model")
    p = knn_predict_proba(model, feature)[0]
    return Prediction(p, int(np.argmax(p)))


class BaselineClassifier:
    """Text-level wrapper: featurize with a frozen embedding table, then LR or k-NN."""

    def __init__(self, kind: str, task: TaskMode, vocab: Vocabulary, embedding: np.ndarray, model):
        if kind not in ("lr", "knn"):
            raise ValueError(f"unknown baseline kind {kind!r}")
        self.kind = kind
        self.task = task
        self.vocab = vocab
        self.embedding = embedding
        self.model = model

    @property
    def labels(self) -> list[str]:
        return self.task.label_names

    def features(self, texts: Sequence[str]) -> np.ndarray:
        return featurize(texts, self.vocab, self.embedding)

    def predict_proba(self, texts: Sequence[str]) -> np.ndarray:
        x = self.features(texts)
        if self.kind == "lr":
            return lr_predict_proba(self.model, x)
        return knn_predict_proba(self.model, x)

    @classmethod
    def fit(
        cls,
        kind: str,
        task: TaskMode,
        vocab: Vocabulary,
        embedding: np.ndarray,
        texts: Sequence[str],
        targets: Sequence[int],
        **kwargs,
    ) -> "BaselineClassifier":
        x = featurize(texts, vocab, embedding)
        y = np.asarray(targets, dtype=np.int64)
        if kind == "lr":
            model = lr_train(x, y, task.num_classes, **kwargs)
        elif kind == "knn":
            model = KNNModel(x, y, task.num_classes, **kwargs)
        else:
            raise ValueError(f"unknown baseline kind {kind!r}")
        return cls(kind, task, vocab, embedding, model)

    def save(self, path: str | Path) -> None:
        tensors = {"embedding": self.embedding}
        meta = {"task": self.task.value, "labels": self.labels, "vocab": self.vocab.to_json()}
        if self.kind == "lr":
            tensors.update(weight=self.model.weight, bias=self.model.bias)
        else:
            tensors.update(features=self.model.features, labels=self.model.labels.astype(np.float64))
            meta["k"] = self.model.k
        save_checkpoint(path, self.kind, tensors, meta)

    @classmethod
    def from_checkpoint(cls, header: dict, tensors: dict) -> "BaselineClassifier":
        kind = header.get("kind")
        task = TaskMode(header["task"])
        vocab = Vocabulary.from_json(header["vocab"])
        if kind == "lr":
            model = LRModel(tensors["weight"], tensors["bias"])
        elif kind == "knn":
            model = KNNModel(tensors["features"], tensors["labels"].astype(np.int64), task.num_classes, header["k"])
        else:
            raise CheckpointError(f"checkpoint holds a {kind!r} model, not a baseline")
        return cls(kind, task, vocab, tensors["embedding"], model)

    @classmethod
    def load(cls, path: str | Path) -> "BaselineClassifier":
        return cls.from_checkpoint(*load_checkpoint(path))


def load_any(path: str | Path):
    """Load a detector or baseline checkpoint based on its ``kind`` tag."""
    from .model import QuestionDetector

    header, tensors = load_checkpoint(path)
    if header.get("kind") == QuestionDetector.kind:
        return QuestionDetector.from_checkpoint(header, tensors)
    return BaselineClassifier.from_checkpoint(header, tensors)
