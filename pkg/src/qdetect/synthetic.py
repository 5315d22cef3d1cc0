"""Seeded synthetic classroom corpora used as fixtures and for acceptance runs."""
from __future__ import annotations

import numpy as np

from .corpus import QuestionLabel, UtteranceRecord, average_pairwise_kappa, majority_vote

FILLERS = (
    "the area of this triangle quadrilateral line segment point angle equation answer "
    "problem number solution side length distance between a and b step first next then "
    "now we look here left right circle radius formula value two three five ten half "
    "square root graph slope axis table chart homework page example question today class"
).split()

WH_WORDS = ("what", "how", "why", "which", "where", "who", "when")
YN_OPENERS = (("can", "you"), ("do", "you"), ("is", "it"), ("are", "you"), ("did", "you"), ("could", "you"))
TAGS = (("right",), ("okay",), ("isn't", "it"), ("yes",))
DECL_OPENERS = (("so",), ("this", "is"), ("we", "have"), ("let's",), ("now",), ("you", "see"), ("it", "is"))

AUXILIARIES = ("is", "are", "can", "will", "does", "did")
SUBJECTS = ("it", "you", "he", "she", "they", "we")

CLASS_KEYWORDS = {
    QuestionLabel.KQ: ("definition", "area", "distance", "result", "formula", "value"),
    QuestionLabel.OQ: ("idea", "thought", "explain", "opinion", "reason", "approach"),
    QuestionLabel.PQ: ("hear", "microphone", "screen", "ready", "camera", "break"),
    QuestionLabel.DQ: ("right", "okay", "pardon", "huh", "sorry", "really"),
    QuestionLabel.NQ: ("therefore", "notice", "remember", "carefully", "homework", "finished"),
}
NEUTRAL = tuple(
    "the a this that we so now then here there today class students please and of".split()
)

QUESTION_TYPES = (QuestionLabel.KQ, QuestionLabel.OQ, QuestionLabel.PQ, QuestionLabel.DQ)


def _annotate(rng: np.random.Generator, label: QuestionLabel, n_annotators: int, accuracy: float):
    ann = []
    for _ in range(n_annotators):
        if rng.random() < accuracy:
            ann.append(label)
        else:
            ann.append(QuestionLabel(int(rng.integers(len(QuestionLabel)))))
    return ann, majority_vote(ann)


def _fillers(rng: np.random.Generator, lo: int, hi: int) -> list[str]:
    return [FILLERS[int(rng.integers(len(FILLERS)))] for _ in range(int(rng.integers(lo, hi + 1)))]


def interrogative_corpus(
    n: int = 2000,
    seed: int = 0,
    question_share: float = 0.6,
    n_annotators: int = 5,
    annotator_accuracy: float = 0.95,
) -> list[UtteranceRecord]:
    """Two-way fixture: questions carry interrogative openers, tags or a final '?'.

    Declaratives may contain wh-words mid-sentence ("that is what we need"),
    so a bag-of-words cue alone is not quite enough.
    """
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n):
        is_q = rng.random() < question_share
        body = _fillers(rng, 2, 7)
        if is_q:
            style = int(rng.integers(3))
            if style == 0:
                words = [WH_WORDS[int(rng.integers(len(WH_WORDS)))]] + ["is"] + body
            elif style == 1:
                words = list(YN_OPENERS[int(rng.integers(len(YN_OPENERS)))]) + body
            else:
                words = body + list(TAGS[int(rng.integers(len(TAGS)))])
            if rng.random() < 0.7:
                words.append("?")
            label = QUESTION_TYPES[int(rng.integers(len(QUESTION_TYPES)))]
        else:
            words = list(DECL_OPENERS[int(rng.integers(len(DECL_OPENERS)))]) + body
            if rng.random() < 0.3:
                pos = int(rng.integers(2, len(words) + 1))
                words[pos:pos] = ["that", "is", WH_WORDS[int(rng.integers(len(WH_WORDS)))]]
            words.append(".")
            label = QuestionLabel.NQ
        ann, final = _annotate(rng, label, n_annotators, annotator_accuracy)
        records.append(UtteranceRecord(f"iq{i:05d}", " ".join(words), ann, final))
    return records


def word_order_corpus(n: int = 2000, seed: int = 0) -> list[UtteranceRecord]:
    """Balanced fixture where only word order separates the classes.

    Every utterance holds one auxiliary and one subject among filler words;
    it is a question iff the auxiliary comes first ("is it ..." vs "it is ...").
    Both orders use the same multiset of tokens, so any order-invariant
    feature carries no label information.
    """
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n):
        words = _fillers(rng, 2, 6)
        aux = AUXILIARIES[int(rng.integers(len(AUXILIARIES)))]
        subj = SUBJECTS[int(rng.integers(len(SUBJECTS)))]
        is_q = i % 2 == 0
        pair = [aux, subj] if is_q else [subj, aux]
        pos = int(rng.integers(0, len(words) + 1))
        words[pos:pos] = pair
        label = QUESTION_TYPES[int(rng.integers(len(QUESTION_TYPES)))] if is_q else QuestionLabel.NQ
        records.append(UtteranceRecord(f"wo{i:05d}", " ".join(words), [label] * 3, label))
    order = rng.permutation(n)
    return [records[j] for j in order]


def keyword_corpus(n: int = 2000, seed: int = 0) -> list[UtteranceRecord]:
    """Five-class fixture: each class has its own disjoint keyword set."""
    rng = np.random.default_rng(seed)
    records = []
    labels = list(QuestionLabel)
    for i in range(n):
        label = labels[i % len(labels)]
        kws = CLASS_KEYWORDS[label]
        words = [NEUTRAL[int(rng.integers(len(NEUTRAL)))] for _ in range(int(rng.integers(2, 7)))]
        for _ in range(int(rng.integers(1, 3))):
            pos = int(rng.integers(0, len(words) + 1))
            words.insert(pos, kws[int(rng.integers(len(kws)))])
        records.append(UtteranceRecord(f"kw{i:05d}", " ".join(words), [label] * 3, label))
    order = rng.permutation(n)
    return [records[j] for j in order]


def _annotation_matrix(truth, uniforms, alternatives, accuracy):
    return np.where(uniforms < accuracy, truth[None, :], alternatives)


def kappa_fixture(
    target: float = 0.696,
    n_items: int = 2000,
    n_annotators: int = 5,
    seed: int = 0,
    tol: float = 0.005,
    class_probs=(0.205, 0.113, 0.089, 0.271, 0.323),
) -> tuple[np.ndarray, float]:
    """Annotation matrix ``[n_annotators, n_items]`` whose mean pairwise kappa is near ``target``.

    Each annotator reports the true label with probability ``q`` and a
    different random label otherwise. All random draws are fixed up front, so
    kappa rises with ``q`` and a bisection over ``q`` finds the target. The
    default class mix follows the shares of the five labels in a large coded
    classroom corpus (6450/3551/2786/8514/10149 of 31450 training segments).
    """
    rng = np.random.default_rng(seed)
    k = len(class_probs)
    truth = rng.choice(k, size=n_items, p=np.asarray(class_probs) / np.sum(class_probs))
    uniforms = rng.random((n_annotators, n_items))
    shift = rng.integers(1, k, size=(n_annotators, n_items))
    alternatives = (truth[None, :] + shift) % k
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        kappa = average_pairwise_kappa(_annotation_matrix(truth, uniforms, alternatives, mid).tolist())
        if abs(kappa - target) <= tol:
            break
        if kappa < target:
            lo = mid
        else:
            hi = mid
    matrix = _annotation_matrix(truth, uniforms, alternatives, mid)
    return matrix, average_pairwise_kappa(matrix.tolist())
