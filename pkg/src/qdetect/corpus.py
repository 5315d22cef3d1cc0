"""Coded utterances: label scheme, annotation aggregation, agreement and splits."""
from __future__ import annotations

import enum
import itertools
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class CorpusError(ValueError):
    """Raised for malformed corpora, annotations or split requests."""


class QuestionLabel(enum.IntEnum):
    KQ = 0  # knowledge-solicitation
    OQ = 1  # open
    PQ = 2  # procedural
    DQ = 3  # discourse-management
    NQ = 4  # not a question

    @classmethod
    def parse(cls, value: str) -> "QuestionLabel":
        try:
            return cls[value]
        except KeyError:
            raise CorpusError(f"unknown label {value!r}") from None


class TwoWayLabel(enum.IntEnum):
    Q = 0
    NQ = 1

    @classmethod
    def parse(cls, value: str) -> "TwoWayLabel":
        try:
            return cls[value]
        except KeyError:
            raise CorpusError(f"unknown two-way label {value!r}") from None


class TaskMode(enum.Enum):
    TWO_WAY = "two-way"
    MULTI_WAY = "multi-way"

    @property
    def num_classes(self) -> int:
        return len(TwoWayLabel) if self is TaskMode.TWO_WAY else len(QuestionLabel)

    @property
    def label_names(self) -> list[str]:
        enum_cls = TwoWayLabel if self is TaskMode.TWO_WAY else QuestionLabel
        return [m.name for m in enum_cls]

    @classmethod
    def parse(cls, value: str) -> "TaskMode":
        try:
            return cls(value)
        except ValueError:
            raise CorpusError(
                f"unknown task {value!r}; expected 'two-way' or 'multi-way'"
            ) from None


def to_two_way(label: QuestionLabel) -> TwoWayLabel:
    return TwoWayLabel.NQ if label == QuestionLabel.NQ else TwoWayLabel.Q


def task_target(label: QuestionLabel, task: TaskMode) -> int:
    """Integer class index of ``label`` under ``task``."""
    if task is TaskMode.TWO_WAY:
        return int(to_two_way(label))
    return int(label)


@dataclass
class UtteranceRecord:
    id: str
    text: str
    annotations: list[QuestionLabel] = field(default_factory=list)
    final_label: QuestionLabel | None = None

    def to_json(self) -> dict:
        out = {
            "id": self.id,
            "text": self.text,
            "annotations": [a.name for a in self.annotations],
        }
        if self.final_label is not None:
            out["final_label"] = self.final_label.name
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "UtteranceRecord":
        if not isinstance(obj, dict):
            raise CorpusError("record must be a JSON object")
        try:
            rid = obj["id"]
            text = obj["text"]
        except KeyError as exc:
            raise CorpusError(f"missing field {exc.args[0]!r}") from None
        if not isinstance(rid, str) or not isinstance(text, str):
            raise CorpusError("'id' and 'text' must be strings")
        raw_ann = obj.get("annotations", [])
        if not isinstance(raw_ann, list):
            raise CorpusError("'annotations' must be an array")
        annotations = [QuestionLabel.parse(a) for a in raw_ann]
        final = obj.get("final_label")
        final_label = None if final is None else QuestionLabel.parse(final)
        if final_label is not None and annotations:
            counts = Counter(annotations)
            if counts[final_label] < max(counts.values()):
                raise CorpusError(
                    f"final_label {final_label.name} is not a mode of the annotations"
                )
        return cls(rid, text, annotations, final_label)


@dataclass(frozen=True)
class SplitSpec:
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 0
    stratified: bool = False

    def __post_init__(self):
        if len(self.ratios) != 3:
            raise CorpusError("split needs exactly three ratios")
        if any(r < 0 for r in self.ratios):
            raise CorpusError("split ratios must be nonnegative")
        if abs(sum(self.ratios) - 1.0) > 1e-9:
            raise CorpusError(f"split ratios must sum to 1, got {sum(self.ratios)}")


@dataclass
class DatasetSplit:
    train: list[UtteranceRecord]
    validation: list[UtteranceRecord]
    test: list[UtteranceRecord]

    def parts(self) -> dict[str, list[UtteranceRecord]]:
        return {"train": self.train, "validation": self.validation, "test": self.test}


def majority_vote(annotations: Sequence[QuestionLabel]) -> QuestionLabel:
    """Most frequent label; ties go to the lowest label code."""
    if not annotations:
        raise CorpusError("no annotations")
    counts = Counter(QuestionLabel(a) for a in annotations)
    best = max(counts.values())
    return min(label for label, c in counts.items() if c == best)


def cohen_kappa(a: Sequence[int], b: Sequence[int]) -> float:
    """Cohen's kappa over the joint confusion table of two annotators.

    Returns 1.0 in the degenerate case where both annotators use a single,
    identical label throughout (chance agreement is 1 and so is the observed).
    """
    if len(a) != len(b):
        raise CorpusError(f"annotation lengths differ: {len(a)} vs {len(b)}")
    if not a:
        raise CorpusError("cannot compute kappa of empty annotation lists")
    n = len(a)
    labels = sorted(set(int(x) for x in a) | set(int(x) for x in b))
    index = {lab: i for i, lab in enumerate(labels)}
    table = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for x, y in zip(a, b):
        table[index[int(x)], index[int(y)]] += 1
    p_o = np.trace(table) / n
    p_e = float(table.sum(axis=1) @ table.sum(axis=0)) / (n * n)
    if p_e == 1.0:
        # single shared label: observed agreement is necessarily 1 as well
        return 1.0
    return float((p_o - p_e) / (1.0 - p_e))


def _check_matrix(annotation_matrix: Sequence[Sequence[int]]) -> None:
    if len(annotation_matrix) < 2:
        raise CorpusError("need at least 2 annotators")
    lengths = {len(row) for row in annotation_matrix}
    if len(lengths) != 1:
        raise CorpusError(f"ragged annotation matrix (row lengths {sorted(lengths)})")


def pairwise_kappas(annotation_matrix: Sequence[Sequence[int]]) -> dict[tuple[int, int], float]:
    """Kappa for every unordered annotator pair; rows are annotators."""
    _check_matrix(annotation_matrix)
    return {
        (i, j): cohen_kappa(annotation_matrix[i], annotation_matrix[j])
        for i, j in itertools.combinations(range(len(annotation_matrix)), 2)
    }


def average_pairwise_kappa(annotation_matrix: Sequence[Sequence[int]]) -> float:
    kappas = pairwise_kappas(annotation_matrix)
    return math.fsum(kappas.values()) / len(kappas)


@dataclass(frozen=True)
class ScreeningResult:
    passed: bool
    precision: float


def screen_annotators(
    gold: Sequence[UtteranceRecord],
    candidate_labels: Sequence[QuestionLabel],
    task: TaskMode,
    threshold: float,
) -> ScreeningResult:
    """Score one candidate annotator against gold-standard records.

    Precision is micro-averaged over all items, which for single-label coding
    equals the fraction of items coded correctly. The threshold is inclusive.
    """
    if len(gold) != len(candidate_labels):
        raise CorpusError("gold and candidate lengths differ")
    if not gold:
        raise CorpusError("empty gold set")
    correct = 0
    for rec, cand in zip(gold, candidate_labels):
        if rec.final_label is None:
            raise CorpusError(f"gold record {rec.id!r} has no final_label")
        cand = QuestionLabel(cand)
        if task is TaskMode.TWO_WAY:
            correct += to_two_way(rec.final_label) == to_two_way(cand)
        else:
            correct += rec.final_label == cand
    precision = correct / len(gold)
    return ScreeningResult(precision >= threshold, precision)


def split_sizes(n: int, ratios: Sequence[float]) -> list[int]:
    """Sizes for an ``n``-item split: round every part but the last, which takes the rest.

    For 39313 items at 8:1:1 this gives 31450/3931/3932.
    """
    sizes = [int(math.floor(n * r + 0.5)) for r in ratios[:-1]]
    total = 0
    for i, s in enumerate(sizes):
        sizes[i] = min(s, n - total)
        total += sizes[i]
    sizes.append(n - total)
    return sizes


def _stratified_counts(
    label_counts: Sequence[int], ratios: Sequence[float], targets: Sequence[int]
) -> np.ndarray:
    """Per-label, per-part counts within one record of the ideal share.

    Starts from floors of the ideal allocation and distributes each label's
    leftover records so that the part totals hit ``targets`` whenever that is
    attainable, preferring the largest fractional remainders.
    """
    ideal = np.outer(label_counts, ratios)
    base = np.floor(ideal).astype(np.int64)
    frac = ideal - base
    deficits = [int(c) - int(row.sum()) for c, row in zip(label_counts, base)]
    options = [list(itertools.combinations(range(len(ratios)), d)) for d in deficits]
    best_key, best_combo = None, None
    for combo in itertools.product(*options):
        cols = np.array(base.sum(axis=0))
        gain = 0.0
        for lab, parts in enumerate(combo):
            for p in parts:
                cols[p] += 1
                gain += frac[lab, p]
        key = (int(np.abs(cols - np.asarray(targets)).sum()), -gain)
        if best_key is None or key < best_key:
            best_key, best_combo = key, combo
    counts = base.copy()
    for lab, parts in enumerate(best_combo):
        for p in parts:
            counts[lab, p] += 1
    return counts


def split_dataset(corpus: Sequence[UtteranceRecord], spec: SplitSpec) -> DatasetSplit:
    if not corpus:
        raise CorpusError("cannot split an empty corpus")
    ids = [r.id for r in corpus]
    if len(set(ids)) != len(ids):
        raise CorpusError("record ids are not unique")
    for r in corpus:
        if r.final_label is None:
            raise CorpusError(f"record {r.id!r} is unlabeled")
    rng = np.random.default_rng(spec.seed)
    n = len(corpus)
    targets = split_sizes(n, spec.ratios)
    assignment = np.empty(n, dtype=np.int64)
    if spec.stratified:
        groups = [
            [i for i, r in enumerate(corpus) if r.final_label == lab] for lab in QuestionLabel
        ]
        groups = [g for g in groups if g]
        counts = _stratified_counts([len(g) for g in groups], spec.ratios, targets)
        for members, row in zip(groups, counts):
            order = rng.permutation(len(members))
            start = 0
            for part, c in enumerate(row):
                for k in order[start : start + c]:
                    assignment[members[k]] = part
                start += c
    else:
        order = rng.permutation(n)
        start = 0
        for part, c in enumerate(targets):
            assignment[order[start : start + c]] = part
            start += c
    parts: list[list[UtteranceRecord]] = [[], [], []]
    for rec, part in zip(corpus, assignment):
        parts[part].append(rec)
    return DatasetSplit(*parts)


def dumps_record(record: UtteranceRecord) -> str:
    return json.dumps(record.to_json(), ensure_ascii=False)


def save_corpus(records: Iterable[UtteranceRecord], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(dumps_record(rec) + "\n")


def parse_corpus_lines(lines: Iterable[str], source: str = "<corpus>") -> list[UtteranceRecord]:
    records = []
    seen: set[str] = set()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            rec = UtteranceRecord.from_json(json.loads(line))
        except json.JSONDecodeError as exc:
            raise CorpusError(f"{source}: line {lineno}: malformed JSON ({exc.msg})") from None
        except CorpusError as exc:
            raise CorpusError(f"{source}: line {lineno}: {exc}") from None
        if rec.id in seen:
            raise CorpusError(f"{source}: line {lineno}: duplicate id {rec.id!r}")
        seen.add(rec.id)
        records.append(rec)
    return records


def load_corpus(path: str | Path) -> list[UtteranceRecord]:
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        return parse_corpus_lines(fh, source=str(path))
