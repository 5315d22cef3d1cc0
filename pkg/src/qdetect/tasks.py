"""Classification heads over the [CLS] vector and their objectives.

The two-way head is a single linear layer followed by a softmax. The
multi-way head runs M independent two-layer GELU MLPs, one per class, each
ending in a sigmoid; it is trained with the sum of the per-class binary
cross-entropies and decoded by argmax over the M probabilities.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import expit

from . import kernels
from .encoder import glorot

EPS = 1e-12


@dataclass
class Prediction:
    probabilities: np.ndarray
    label: int


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def argmax_lowest(p: np.ndarray) -> np.ndarray | int:
    # np.argmax returns the first maximal index, which is the tie rule we want
    return np.argmax(p, axis=-1)


def bce_loss(p: float, c: int) -> float:
    """Binary cross-entropy on ``p`` clamped into [EPS, 1 - EPS]."""
    p = min(max(float(p), EPS), 1.0 - EPS)
    return -((c == 0) * math.log(1.0 - p) + (c == 1) * math.log(p))


def multi_task_loss(pred: Prediction | np.ndarray, target: int, M: int | None = None) -> float:
    """Sum of per-class binary cross-entropies against a one-hot target."""
    p = pred.probabilities if isinstance(pred, Prediction) else np.asarray(pred)
    M = len(p) if M is None else M
    if len(p) != M:
        raise ValueError(f"expected {M} probabilities, got {len(p)}")
    if not 0 <= target < M:
        raise ValueError(f"target {target} out of range for M={M}")
    total = 0.0
    for i in range(M):
        total += bce_loss(p[i], int(i == target))
    return total


def two_way_loss(pred: Prediction | np.ndarray, target: int) -> float:
    p = pred.probabilities if isinstance(pred, Prediction) else np.asarray(pred)
    if target not in (0, 1):
        raise ValueError(f"two-way target must be 0 or 1, got {target}")
    return -math.log(min(max(float(p[target]), EPS), 1.0 - EPS))


def batch_multi_task_loss(p: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Vectorized ``multi_task_loss`` for ``p[B, M]``; one loss per row."""
    p = np.clip(p, EPS, 1.0 - EPS)
    onehot = np.zeros_like(p)
    onehot[np.arange(len(targets)), targets] = 1.0
    return -(onehot * np.log(p) + (1.0 - onehot) * np.log1p(-p)).sum(axis=1)


def batch_two_way_loss(p: np.ndarray, targets: np.ndarray) -> np.ndarray:
    return -np.log(np.clip(p[np.arange(len(targets)), targets], EPS, 1.0 - EPS))


class TwoWayHead:
    """Linear map to two logits followed by a softmax."""

    kind = "two-way"

    def __init__(self, params: dict[str, np.ndarray]):
        self.params = params

    @classmethod
    def init(cls, d_model: int, rng: np.random.Generator) -> "TwoWayHead":
        return cls({"weight": glorot(rng, (d_model, 2)), "bias": np.zeros(2)})

    @property
    def num_classes(self) -> int:
        return 2

    def _check(self, cls_vec: np.ndarray) -> None:
        if cls_vec.shape[-1] != self.params["weight"].shape[0]:
            raise ValueError(
                f"[CLS] vector has size {cls_vec.shape[-1]}, head expects {self.params['weight'].shape[0]}"
            )

    def forward(self, cls_vec: np.ndarray) -> tuple[np.ndarray, dict]:
        """Probabilities ``[B, 2]`` for ``cls_vec[B, d]``."""
        self._check(cls_vec)
        probs = softmax(cls_vec @ self.params["weight"] + self.params["bias"])
        return probs, {"cls": cls_vec, "probs": probs}

    def loss(self, probs: np.ndarray, targets: np.ndarray) -> np.ndarray:
        return batch_two_way_loss(probs, targets)

    def backward(self, cache: dict, targets: np.ndarray, weights: np.ndarray) -> tuple[dict, np.ndarray]:
        """Gradients of ``sum_b weights[b] * loss_b``; returns (param grads, d cls)."""
        dlogits = cache["probs"].copy()
        dlogits[np.arange(len(targets)), targets] -= 1.0
        dlogits *= weights[:, None]
        grads = {"weight": cache["cls"].T @ dlogits, "bias": dlogits.sum(axis=0)}
        return grads, dlogits @ self.params["weight"].T


class MultiTaskHead:
    """M independent MLP + sigmoid branches over a shared [CLS] vector."""

    kind = "multi-way"

    def __init__(self, params: dict[str, np.ndarray]):
        self.params = params

    @classmethod
    def init(cls, d_model: int, M: int, hidden: Sequence[int], rng: np.random.Generator) -> "MultiTaskHead":
        if M < 2:
            raise ValueError("multi-task head needs M >= 2")
        h1, h2 = hidden
        return cls(
            {
                "w1": glorot(rng, (M, d_model, h1)),
                "b1": np.zeros((M, h1)),
                "w2": glorot(rng, (M, h1, h2)),
                "b2": np.zeros((M, h2)),
                "w3": glorot(rng, (M, h2, 1))[..., 0],
                "b3": np.zeros(M),
            }
        )

    @property
    def num_classes(self) -> int:
        return self.params["b3"].shape[0]

    def _check(self, cls_vec: np.ndarray) -> None:
        if cls_vec.shape[-1] != self.params["w1"].shape[1]:
            raise ValueError(
                f"[CLS] vector has size {cls_vec.shape[-1]}, head expects {self.params['w1'].shape[1]}"
            )

    def logits(self, cls_vec: np.ndarray) -> tuple[np.ndarray, dict]:
        self._check(cls_vec)
        p = self.params
        z1 = np.einsum("bd,mdh->bmh", cls_vec, p["w1"]) + p["b1"]
        a1 = kernels.gelu_forward(z1)
        z2 = np.einsum("bmh,mhk->bmk", a1, p["w2"]) + p["b2"]
        a2 = kernels.gelu_forward(z2)
        logits = np.einsum("bmk,mk->bm", a2, p["w3"]) + p["b3"]
        return logits, {"cls": cls_vec, "z1": z1, "a1": a1, "z2": z2, "a2": a2}

    def forward(self, cls_vec: np.ndarray) -> tuple[np.ndarray, dict]:
        """Independent per-class probabilities ``[B, M]``."""
        logits, cache = self.logits(cls_vec)
        probs = expit(logits)
        cache["probs"] = probs
        return probs, cache

    def loss(self, probs: np.ndarray, targets: np.ndarray) -> np.ndarray:
        return batch_multi_task_loss(probs, targets)

    def backward(self, cache: dict, targets: np.ndarray, weights: np.ndarray) -> tuple[dict, np.ndarray]:
        p = self.params
        onehot = np.zeros_like(cache["probs"])
        onehot[np.arange(len(targets)), targets] = 1.0
        dlogits = (cache["probs"] - onehot) * weights[:, None]
        grads = {
            "w3": np.einsum("bm,bmk->mk", dlogits, cache["a2"]),
            "b3": dlogits.sum(axis=0),
        }
        da2 = dlogits[:, :, None] * p["w3"][None]
        dz2 = kernels.gelu_backward(cache["z2"], da2)
        grads["w2"] = np.einsum("bmh,bmk->mhk", cache["a1"], dz2)
        grads["b2"] = dz2.sum(axis=0)
        da1 = np.einsum("bmk,mhk->bmh", dz2, p["w2"])
        dz1 = kernels.gelu_backward(cache["z1"], da1)
        grads["w1"] = np.einsum("bd,bmh->mdh", cache["cls"], dz1)
        grads["b1"] = dz1.sum(axis=0)
        dcls = np.einsum("bmh,mdh->bd", dz1, p["w1"])
        return grads, dcls


def forward_two_way(head: TwoWayHead, cls_vec: np.ndarray) -> Prediction:
    probs, _ = head.forward(np.asarray(cls_vec, dtype=np.float64)[None, :])
    return Prediction(probs[0], int(argmax_lowest(probs[0])))


def forward_multi(head: MultiTaskHead, cls_vec: np.ndarray) -> Prediction:
    probs, _ = head.forward(np.asarray(cls_vec, dtype=np.float64)[None, :])
    return Prediction(probs[0], int(argmax_lowest(probs[0])))


def head_backward(head: TwoWayHead | MultiTaskHead, cls_vec: np.ndarray, target: int) -> tuple[dict, np.ndarray]:
    """Exact gradient of one example's task loss w.r.t. the head and the [CLS] vector."""
    cls_vec = np.asarray(cls_vec, dtype=np.float64)[None, :]
    if not 0 <= target < head.num_classes:
        raise ValueError(f"target {target} out of range")
    _, cache = head.forward(cls_vec)
    grads, dcls = head.backward(cache, np.array([target]), np.ones(1))
    return grads, dcls[0]
