"""Encoder + task head bundled with its vocabulary: the trainable detector."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from . import encoder
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .corpus import TaskMode
from .encoder import ModelConfig
from .tasks import MultiTaskHead, TwoWayHead
from .text import Vocabulary, encode_batch

# fixed inference chunk so every entry point computes a given input identically
EVAL_BATCH = 64


class QuestionDetector:
    kind = "transformer"

    def __init__(self, config: ModelConfig, task: TaskMode, vocab: Vocabulary, enc_params: dict, head):
        if vocab.size != config.vocab_size:
            raise ValueError(f"vocab size {vocab.size} != config.vocab_size {config.vocab_size}")
        self.config = config
        self.task = task
        self.vocab = vocab
        self.enc_params = enc_params
        self.head = head

    @classmethod
    def init(cls, config: ModelConfig, task: TaskMode, vocab: Vocabulary) -> "QuestionDetector":
        rng = np.random.default_rng(config.seed)
        enc_params = encoder.init_parameters(config, rng)
        if task is TaskMode.TWO_WAY:
            head = TwoWayHead.init(config.d_model, rng)
        else:
            head = MultiTaskHead.init(config.d_model, task.num_classes, config.head_sizes, rng)
        return cls(config, task, vocab, enc_params, head)

    @property
    def labels(self) -> list[str]:
        return self.task.label_names

    def parameters(self) -> dict[str, np.ndarray]:
        """Flat view (shared arrays) of every trainable tensor."""
        params = {f"encoder.{k}": v for k, v in self.enc_params.items()}
        params.update({f"head.{k}": v for k, v in self.head.params.items()})
        return params

    def encode(self, texts: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
        return encode_batch(texts, self.vocab, self.config.max_len)

    def forward(self, ids, mask, training=False, rng=None):
        hidden, enc_cache = encoder.forward_batch(self.enc_params, self.config, ids, mask, training, rng)
        probs, head_cache = self.head.forward(hidden[:, 0])
        return probs, (hidden.shape, enc_cache, head_cache)

    def loss_and_grads(self, ids, mask, targets, training=False, rng=None):
        """Mean task loss over the batch and its gradient for every parameter."""
        targets = np.asarray(targets, dtype=np.int64)
        probs, (hshape, enc_cache, head_cache) = self.forward(ids, mask, training, rng)
        losses = self.head.loss(probs, targets)
        weights = np.full(len(targets), 1.0 / len(targets))
        head_grads, dcls = self.head.backward(head_cache, targets, weights)
        d_hidden = np.zeros(hshape)
        d_hidden[:, 0] = dcls
        enc_grads = encoder.backward_batch(self.enc_params, self.config, enc_cache, d_hidden)
        grads = {f"encoder.{k}": v for k, v in enc_grads.items()}
        grads.update({f"head.{k}": v for k, v in head_grads.items()})
        return float(losses.mean()), grads

    def batch_loss(self, ids, mask, targets) -> float:
        probs, _ = self.forward(ids, mask)
        return float(self.head.loss(probs, np.asarray(targets, dtype=np.int64)).mean())

    def predict_proba(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.head.num_classes))
        for start in range(0, len(texts), EVAL_BATCH):
            ids, mask = self.encode(texts[start : start + EVAL_BATCH])
            out[start : start + len(ids)] = self.forward(ids, mask)[0]
        return out

    def save(self, path: str | Path, extra: dict | None = None) -> None:
        meta = {
            "config": self.config.to_json(),
            "task": self.task.value,
            "labels": self.labels,
            "vocab": self.vocab.to_json(),
        }
        meta.update(extra or {})
        save_checkpoint(path, self.kind, self.parameters(), meta)

    @classmethod
    def from_checkpoint(cls, header: dict, tensors: dict) -> "QuestionDetector":
        if header.get("kind") != cls.kind:
            raise CheckpointError(f"checkpoint holds a {header.get('kind')!r} model, not a transformer")
        config = ModelConfig.from_json(header["config"])
        task = TaskMode(header["task"])
        vocab = Vocabulary.from_json(header["vocab"])
        enc = {k[len("encoder."):]: v for k, v in tensors.items() if k.startswith("encoder.")}
        head_params = {k[len("head."):]: v for k, v in tensors.items() if k.startswith("head.")}
        head = TwoWayHead(head_params) if task is TaskMode.TWO_WAY else MultiTaskHead(head_params)
        expected = encoder.init_parameters(config, np.random.default_rng(0))
        for k, v in expected.items():
            if k not in enc or enc[k].shape != v.shape:
                raise CheckpointError(f"checkpoint tensor encoder.{k} missing or misshapen")
        return cls(config, task, vocab, enc, head)

    @classmethod
    def load(cls, path: str | Path) -> "QuestionDetector":
        return cls.from_checkpoint(*load_checkpoint(path))
