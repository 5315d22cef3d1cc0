"""Tokenization, vocabulary, [CLS]-prefixed encoding and ASR-noise simulation."""
from __future__ import annotations

import json
import unicodedata
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

PAD, UNK, CLS = "[PAD]", "[UNK]", "[CLS]"
PAD_ID, UNK_ID, CLS_ID = 0, 1, 2
RESERVED = (PAD, UNK, CLS)
MODES = ("whitespace", "character")


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def tokenize(text: str, mode: str = "whitespace") -> list[str]:
    """Split raw transcript text into tokens.

    Whitespace mode lowercases, splits on whitespace and peels leading and
    trailing punctuation off each word as one token per character, so
    ``"Right?"`` becomes ``["right", "?"]``. Character mode emits one token per
    non-whitespace character, for scripts written without word spacing.
    """
    if mode == "character":
        return [ch for ch in text if not ch.isspace()]
    if mode != "whitespace":
        raise ValueError(f"unknown tokenization mode {mode!r}")
    tokens: list[str] = []
    for word in text.lower().split():
        start, end = 0, len(word)
        while start < end and _is_punct(word[start]):
            start += 1
        while end > start and _is_punct(word[end - 1]):
            end -= 1
        tokens.extend(word[:start])
        if start < end:
            tokens.append(word[start:end])
        tokens.extend(word[end:])
    return tokens


def detokenize(tokens: Sequence[str], mode: str = "whitespace") -> str:
    return ("" if mode == "character" else " ").join(tokens)


class Vocabulary:
    """Immutable token <-> id map with PAD=0, UNK=1, CLS=2 reserved."""

    def __init__(self, tokens: Sequence[str], mode: str = "whitespace"):
        if mode not in MODES:
            raise ValueError(f"unknown tokenization mode {mode!r}")
        self.mode = mode
        self._itos = list(RESERVED) + [t for t in tokens if t not in RESERVED]
        self._stoi = {t: i for i, t in enumerate(self._itos)}
        if len(self._stoi) != len(self._itos):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self._itos)

    @property
    def size(self) -> int:
        return len(self._itos)

    def __contains__(self, token: str) -> bool:
        return token in self._stoi

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.mode == other.mode and self._itos == other._itos

    def id(self, token: str) -> int:
        return self._stoi.get(token, UNK_ID)

    def token(self, idx: int) -> str:
        return self._itos[idx]

    @property
    def content_tokens(self) -> list[str]:
        return self._itos[len(RESERVED):]

    def to_json(self) -> dict:
        return {
            "header": {"mode": self.mode, "size": self.size},
            "tokens": {t: i for i, t in enumerate(self._itos)},
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Vocabulary":
        header = obj["header"]
        mapping = obj["tokens"]
        itos = sorted(mapping, key=mapping.__getitem__)
        if [mapping[t] for t in itos] != list(range(len(itos))) or len(itos) != header["size"]:
            raise ValueError("vocabulary ids are not dense in [0, size)")
        if tuple(itos[: len(RESERVED)]) != RESERVED:
            raise ValueError("vocabulary reserved ids are wrong")
        return cls(itos[len(RESERVED):], mode=header["mode"])

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), ensure_ascii=False, indent=1), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def build_vocab(texts: Iterable[str], min_freq: int = 1, mode: str = "whitespace") -> Vocabulary:
    """Vocabulary over ``texts`` ordered by (frequency desc, token asc).

    ``texts`` may be raw strings or objects with a ``text`` attribute, such as
    :class:`~qdetect.corpus.UtteranceRecord`.
    """
    counts: Counter[str] = Counter()
    n = 0
    for item in texts:
        n += 1
        counts.update(tokenize(getattr(item, "text", item), mode))
    if n == 0:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    kept = [t for t, c in counts.items() if c >= min_freq and t not in RESERVED]
    kept.sort(key=lambda t: (-counts[t], t))
    return Vocabulary(kept, mode=mode)


@dataclass(frozen=True)
class TokenSequence:
    ids: np.ndarray  # int64 [max_len]
    attention_mask: np.ndarray  # int8 [max_len]
    original_length: int  # real tokens incl. CLS, after truncation


def encode(text: str, vocab: Vocabulary, max_len: int = 64) -> TokenSequence:
    if max_len < 2:
        raise ValueError(f"max_len must be >= 2, got {max_len}")
    ids = [CLS_ID] + [vocab.id(t) for t in tokenize(text, vocab.mode)]
    ids = ids[:max_len]
    n = len(ids)
    out = np.full(max_len, PAD_ID, dtype=np.int64)
    out[:n] = ids
    mask = np.zeros(max_len, dtype=np.int8)
    mask[:n] = 1
    return TokenSequence(out, mask, n)


def encode_batch(texts: Sequence[str], vocab: Vocabulary, max_len: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Stack encodings into ``(ids[B, L], mask[B, L])``."""
    seqs = [encode(t, vocab, max_len) for t in texts]
    if not seqs:
        return np.zeros((0, max_len), np.int64), np.zeros((0, max_len), np.int8)
    return np.stack([s.ids for s in seqs]), np.stack([s.attention_mask for s in seqs])


def decode(seq: TokenSequence, vocab: Vocabulary) -> list[str]:
    """Content tokens of an encoded sequence (CLS and padding removed)."""
    return [vocab.token(int(i)) for i in seq.ids[1 : seq.original_length]]


@dataclass(frozen=True)
class PerturbSpec:
    substitution_rate: float = 0.14
    deletion_rate: float = 0.07
    insertion_rate: float = 0.07
    seed: int = 0

    def __post_init__(self):
        for name in ("substitution_rate", "deletion_rate", "insertion_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.substitution_rate + self.deletion_rate > 1.0:
            raise ValueError("substitution_rate + deletion_rate must be <= 1")

    @property
    def composite_rate(self) -> float:
        return self.substitution_rate + self.deletion_rate + self.insertion_rate


def perturb_counted(
    tokens: Sequence[str],
    spec: PerturbSpec,
    vocab: Vocabulary,
    rng: np.random.Generator | None = None,
) -> tuple[list[str], int]:
    """Apply simulated ASR errors; returns the new tokens and the edit count.

    Each input token is independently substituted, deleted or kept, and after
    each input token a random vocabulary token may be inserted. Substitutes
    differ from the token they replace whenever the vocabulary allows it.
    """
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    pool = vocab.content_tokens
    if not pool:
        return list(tokens), 0
    sub, dele, ins = spec.substitution_rate, spec.deletion_rate, spec.insertion_rate
    out: list[str] = []
    ops = 0
    for tok in tokens:
        u = rng.random()
        if u < sub:
            if len(pool) > 1 and tok in vocab:
                j = int(rng.integers(len(pool) - 1))
                cur = vocab.id(tok) - len(RESERVED)
                j += j >= cur
            else:
                j = int(rng.integers(len(pool)))
            out.append(pool[j])
            ops += 1
        elif u < sub + dele:
            ops += 1
        else:
            out.append(tok)
        if rng.random() < ins:
            out.append(pool[int(rng.integers(len(pool)))])
            ops += 1
    return out, ops


def perturb(
    tokens: Sequence[str],
    spec: PerturbSpec,
    vocab: Vocabulary,
    rng: np.random.Generator | None = None,
) -> list[str]:
    return perturb_counted(tokens, spec, vocab, rng)[0]
