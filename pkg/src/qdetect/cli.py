"""``qdetect`` command line: split, train, eval, predict, perturb, agreement, baseline.

Exit codes: 0 success, 1 some per-item failures (predict), 2 usage or input
errors. Commands given ``--out`` write a ``run.json`` manifest there that is
enough to replay the run. ``QDETECT_LOG`` sets the log level.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
import warnings
from collections import Counter
from dataclasses import fields
from pathlib import Path

import numpy as np
import scipy

from . import __version__, kernels
from .baselines import BaselineClassifier, load_any
from .checkpoint import CheckpointError
from .corpus import (
    CorpusError,
    DatasetSplit,
    SplitSpec,
    TaskMode,
    average_pairwise_kappa,
    load_corpus,
    majority_vote,
    pairwise_kappas,
    save_corpus,
    split_dataset,
    to_two_way,
)
from .encoder import ConfigError, ModelConfig
from .model import QuestionDetector
from .text import PerturbSpec, Vocabulary, build_vocab, detokenize, perturb_counted, tokenize
from .train import TrainConfig, TrainError, evaluate, targets_for, train

log = logging.getLogger("qdetect")

SPLIT_FILES = {"train": "train.jsonl", "validation": "validation.jsonl", "test": "test.jsonl"}


class UsageError(Exception):
    """Bad flags or unusable inputs; reported with exit code 2."""


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir: Path, command: str, args: argparse.Namespace, inputs: list, config: dict | None = None):
    flags = {k: v for k, v in sorted(vars(args).items()) if k not in ("func",)}
    manifest = {
        "command": command,
        "flags": flags,
        "config": config or {},
        "seed": flags.get("seed"),
        "versions": {
            "qdetect": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "kernel_backend": kernels.backend,
        },
        "inputs": {str(p): _sha256(p) for p in inputs},
    }
    (out_dir / "run.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")


def _load(path) -> list:
    try:
        return load_corpus(path)
    except OSError as exc:
        raise UsageError(f"cannot read corpus {path}: {exc.strerror or exc}") from None
    except CorpusError as exc:
        raise UsageError(str(exc)) from None


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def parse_ratios(text: str) -> tuple[float, float, float]:
    parts = text.split(":")
    if len(parts) != 3:
        raise UsageError(f"--ratios needs exactly three parts like 8:1:1, got {text!r}")
    try:
        values = [float(p) for p in parts]
    except ValueError:
        raise UsageError(f"--ratios parts must be numbers, got {text!r}") from None
    total = sum(values)
    if total <= 0 or any(v < 0 for v in values):
        raise UsageError("--ratios must be nonnegative with a positive sum")
    return tuple(v / total for v in values)


def _parse_value(raw: str):
    raw = raw.strip()
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def read_config_file(path) -> dict:
    """JSON object, or flat ``key=value`` lines with ``#`` comments."""
    try:
        content = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror or exc}") from None
    try:
        obj = json.loads(content)
    except json.JSONDecodeError:
        obj = None
    if isinstance(obj, dict):
        return obj
    out = {}
    for lineno, line in enumerate(content.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip()] = _parse_value(value)
    return out


def _overrides(pairs) -> dict:
    out = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise UsageError(f"--set expects key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        out[key.strip()] = _parse_value(value)
    return out


# --- split -------------------------------------------------------------------


def cmd_split(args) -> int:
    spec_ratios = parse_ratios(args.ratios)
    records = _load(args.corpus)
    try:
        split = split_dataset(records, SplitSpec(spec_ratios, args.seed, args.stratified))
    except CorpusError as exc:
        raise UsageError(str(exc)) from None
    out = _out_dir(args.out)
    for name, part in split.parts().items():
        save_corpus(part, out / SPLIT_FILES[name])
    write_manifest(out, "split", args, [args.corpus], {"ratios": list(spec_ratios)})
    print(" ".join(f"{name}={len(part)}" for name, part in split.parts().items()))
    return 0


# --- train -------------------------------------------------------------------


def load_split_dir(split_dir) -> DatasetSplit:
    split_dir = Path(split_dir)
    parts = {}
    for name, fname in SPLIT_FILES.items():
        path = split_dir / fname
        if not path.is_file():
            raise UsageError(f"missing split file {path}")
        parts[name] = _load(path)
    return DatasetSplit(parts["train"], parts["validation"], parts["test"])


def _route_config(values: dict) -> tuple[dict, dict]:
    model_keys = {f.name for f in fields(ModelConfig)} - {"vocab_size"}
    train_keys = {f.name for f in fields(TrainConfig)}
    model_cfg, train_cfg = {}, {}
    for key, value in values.items():
        if key in model_keys:
            model_cfg[key] = value
        elif key in train_keys:
            train_cfg[key] = value
        else:
            raise UsageError(f"unknown config key {key!r}")
    return model_cfg, train_cfg


def cmd_train(args) -> int:
    task = TaskMode.parse(args.task)
    split = load_split_dir(args.split_dir)
    if not split.train:
        raise UsageError("train split is empty")
    model_values, train_values = {}, {}
    if args.model_cfg:
        m, t = _route_config(read_config_file(args.model_cfg))
        model_values.update(m)
        train_values.update(t)
    if args.train_cfg:
        m, t = _route_config(read_config_file(args.train_cfg))
        model_values.update(m)
        train_values.update(t)
    m, t = _route_config(_overrides(args.set))
    model_values.update(m)
    train_values.update(t)
    if args.seed is not None:
        model_values["seed"] = args.seed
        train_values["seed"] = args.seed

    vocab = build_vocab(split.train, min_freq=args.min_freq, mode=args.token_mode)
    try:
        config = ModelConfig(vocab_size=vocab.size, **model_values)
        tcfg = TrainConfig(**train_values)
    except (TypeError, ConfigError, TrainError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from None
    out = _out_dir(args.out)
    vocab.save(out / "vocab.json")
    model = QuestionDetector.init(config, task, vocab)
    report = train(model, split, tcfg, out_dir=out)
    text = report.dumps()
    (out / "report.json").write_text(text + "\n")
    write_manifest(
        out,
        "train",
        args,
        [Path(args.split_dir) / f for f in SPLIT_FILES.values()],
        {"model": config.to_json(), "train": tcfg.to_json(), "task": task.value},
    )
    print(text)
    if report.error:
        log.error(report.error)
        return 2
    return 0


# --- eval / predict ----------------------------------------------------------


def _load_model(path):
    try:
        return load_any(path)
    except OSError as exc:
        raise UsageError(f"cannot read checkpoint {path}: {exc.strerror or exc}") from None
    except (CheckpointError, KeyError, ValueError) as exc:
        raise UsageError(f"bad checkpoint {path}: {exc}") from None


def prediction_line(model, probs: np.ndarray, rid: str | None = None) -> str:
    obj = {}
    if rid is not None:
        obj["id"] = rid
    obj["label"] = model.labels[int(np.argmax(probs))]
    obj["probs"] = {name: float(p) for name, p in zip(model.labels, probs)}
    return json.dumps(obj, ensure_ascii=False)


def cmd_eval(args) -> int:
    model = _load_model(args.checkpoint)
    if args.task is not None and TaskMode.parse(args.task) is not model.task:
        raise UsageError(f"checkpoint was trained for {model.task.value}, not {args.task}")
    records = _load(args.data)
    if not records:
        raise UsageError(f"no records in {args.data}")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            result = evaluate(model, records)
        except TrainError as exc:
            raise UsageError(str(exc)) from None
    for w in caught:
        log.warning("%s", w.message)
    report = result.report.to_json()
    report["task"] = model.task.value
    report["n"] = len(records)
    text = json.dumps(report, indent=2, sort_keys=True)
    print(text)
    if args.predictions:
        with open(args.predictions, "w", encoding="utf-8") as fh:
            for rec, probs in zip(records, result.probs):
                fh.write(prediction_line(model, probs, rec.id) + "\n")
    if args.out:
        out = _out_dir(args.out)
        (out / "metrics.json").write_text(text + "\n")
        write_manifest(out, "eval", args, [args.checkpoint, args.data])
    return 0


def cmd_predict(args) -> int:
    model = _load_model(args.checkpoint)
    if args.text is not None:
        items = [(None, args.text, None)]
    else:
        items = []
        for lineno, line in enumerate(sys.stdin, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                if not isinstance(obj, dict) or not isinstance(obj.get("text"), str):
                    raise ValueError("expected an object with a string 'text' field")
                rid = obj.get("id")
                items.append((None if rid is None else str(rid), obj["text"], None))
            except ValueError as exc:
                items.append((None, None, f"line {lineno}: {exc}"))
    valid = [text for _, text, err in items if err is None]
    probs = model.predict_proba(valid) if valid else np.zeros((0, len(model.labels)))
    failed = 0
    j = 0
    for rid, _, err in items:
        if err is not None:
            failed += 1
            print(json.dumps({"error": err}))
            continue
        print(prediction_line(model, probs[j], rid))
        j += 1
    return 1 if failed else 0


# --- perturb -----------------------------------------------------------------


def parse_rates(text: str) -> PerturbSpec:
    parts = text.split(",")
    if len(parts) != 3:
        raise UsageError(f"--rates needs three comma-separated values s,d,i, got {text!r}")
    try:
        s, d, i = (float(p) for p in parts)
        return PerturbSpec(s, d, i)
    except ValueError as exc:
        raise UsageError(f"invalid --rates {text!r}: {exc}") from None


def cmd_perturb(args) -> int:
    rates = parse_rates(args.rates)
    spec = PerturbSpec(rates.substitution_rate, rates.deletion_rate, rates.insertion_rate, args.seed)
    records = _load(args.corpus)
    if not records:
        raise UsageError(f"no records in {args.corpus}")
    vocab = Vocabulary.load(args.vocab) if args.vocab else build_vocab(records, 1, args.token_mode)
    rng = np.random.default_rng(spec.seed)
    out = _out_dir(args.out)
    n_tokens = n_ops = 0
    perturbed = []
    for rec in records:
        tokens = tokenize(rec.text, vocab.mode)
        new_tokens, ops = perturb_counted(tokens, spec, vocab, rng)
        n_tokens += len(tokens)
        n_ops += ops
        new_text = rec.text if ops == 0 else detokenize(new_tokens, vocab.mode)
        perturbed.append(type(rec)(rec.id, new_text, list(rec.annotations), rec.final_label))
    save_corpus(perturbed, out / "corpus.jsonl")
    stats = {
        "records": len(records),
        "input_tokens": n_tokens,
        "edit_operations": n_ops,
        "operation_rate": n_ops / n_tokens if n_tokens else 0.0,
        "target_rate": spec.composite_rate,
    }
    (out / "stats.json").write_text(json.dumps(stats, indent=2, sort_keys=True) + "\n")
    write_manifest(out, "perturb", args, [args.corpus] + ([args.vocab] if args.vocab else []))
    print(json.dumps(stats, sort_keys=True))
    return 0


# --- agreement ---------------------------------------------------------------


def agreement_report(records, task: TaskMode) -> dict:
    usable = [r for r in records if len(r.annotations) >= 2]
    too_few = len(records) - len(usable)
    if not usable:
        raise UsageError("no record has at least 2 annotations")
    width = Counter(len(r.annotations) for r in usable).most_common(1)[0][0]
    rows = [r for r in usable if len(r.annotations) == width]
    ragged = len(usable) - len(rows)

    def code(label):
        return int(to_two_way(label)) if task is TaskMode.TWO_WAY else int(label)

    matrix = [[code(r.annotations[a]) for r in rows] for a in range(width)]
    pairs = pairwise_kappas(matrix)
    votes = [majority_vote(r.annotations) for r in rows]
    labeled = [(r, v) for r, v in zip(rows, votes) if r.final_label is not None]
    names = task.label_names
    return {
        "task": task.value,
        "n_records": len(records),
        "n_used": len(rows),
        "n_annotators": width,
        "excluded_fewer_than_2": too_few,
        "excluded_other_width": ragged,
        "pairwise": {f"{i}-{j}": k for (i, j), k in pairs.items()},
        "average_kappa": average_pairwise_kappa(matrix),
        "majority_vote": {
            "distribution": dict(sorted(Counter(names[code(v)] for v in votes).items())),
            "unanimous_share": sum(len(set(r.annotations)) == 1 for r in rows) / len(rows),
            "final_label_present": len(labeled),
            "final_label_matches_vote": sum(r.final_label == v for r, v in labeled) / len(labeled)
            if labeled
            else None,
        },
    }


def cmd_agreement(args) -> int:
    task = TaskMode.parse(args.task)
    records = _load(args.corpus)
    if not records:
        raise UsageError(f"no records in {args.corpus}")
    report = agreement_report(records, task)
    text = json.dumps(report, indent=2, sort_keys=True)
    print(text)
    if args.out:
        out = _out_dir(args.out)
        (out / "agreement.json").write_text(text + "\n")
        write_manifest(out, "agreement", args, [args.corpus])
    return 0


# --- baseline ----------------------------------------------------------------


def cmd_baseline(args) -> int:
    task = TaskMode.parse(args.task)
    split = load_split_dir(args.split_dir)
    source = _load_model(args.embeddings_from)
    if not isinstance(source, QuestionDetector):
        raise UsageError("--embeddings-from must be a transformer checkpoint")
    embedding = source.enc_params["tok_emb"].copy()
    texts = [r.text for r in split.train]
    targets = targets_for(split.train, task)
    if args.kind == "lr":
        kwargs = {"lr": args.lr, "epochs": args.epochs, "l2": args.l2}
    else:
        kwargs = {"k": args.k}
    try:
        clf = BaselineClassifier.fit(args.kind, task, source.vocab, embedding, texts, targets, **kwargs)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = _out_dir(args.out)
    clf.save(out / f"{args.kind}.ckpt")
    result = {}
    for name in ("validation", "test"):
        part = getattr(split, name)
        if part:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                result[name] = evaluate(clf, part).report.to_json()
    text = json.dumps(result, indent=2, sort_keys=True)
    (out / "report.json").write_text(text + "\n")
    write_manifest(out, "baseline", args, [args.embeddings_from] + [Path(args.split_dir) / f for f in SPLIT_FILES.values()])
    print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qdetect", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"qdetect {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("split", help="split a corpus into train/validation/test JSONL files")
    p.add_argument("--corpus", required=True)
    p.add_argument("--ratios", default="8:1:1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stratified", action="store_true", help="keep per-label proportions")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train the transformer detector")
    p.add_argument("--task", required=True)
    p.add_argument("--split-dir", required=True)
    p.add_argument("--model-cfg", help="JSON or key=value file")
    p.add_argument("--train-cfg", help="JSON or key=value file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")
    p.add_argument("--seed", type=int, help="overrides both model and train seeds")
    p.add_argument("--min-freq", type=int, default=1)
    p.add_argument("--token-mode", choices=("whitespace", "character"), default="whitespace")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="metrics report for a checkpoint on a labeled JSONL file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--task")
    p.add_argument("--predictions", help="also write per-utterance predictions JSONL here")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="label raw utterances")
    p.add_argument("--checkpoint", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--text")
    src.add_argument("--stdin-jsonl", action="store_true", help='read {"id":..., "text":...} lines')
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("perturb", help="simulate ASR errors on a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--rates", default="0.14,0.07,0.07", help="substitution,deletion,insertion")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--vocab", help="vocabulary JSON to draw substitutes from (default: built from the corpus)")
    p.add_argument("--token-mode", choices=("whitespace", "character"), default="whitespace")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("agreement", help="pairwise and average Cohen's kappa of the annotators")
    p.add_argument("--corpus", required=True)
    p.add_argument("--task", default="multi-way")
    p.add_argument("--out")
    p.set_defaults(func=cmd_agreement)

    p = sub.add_parser("baseline", help="fit an averaged-embedding LR or k-NN baseline")
    p.add_argument("--kind", choices=("lr", "knn"), required=True)
    p.add_argument("--task", required=True)
    p.add_argument("--split-dir", required=True)
    p.add_argument("--embeddings-from", required=True, help="transformer checkpoint supplying token embeddings")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--l2", type=float, default=1e-4)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_baseline)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("QDETECT_LOG", "WARNING").upper()
    if not isinstance(logging.getLevelName(level), int):
        level = "WARNING"
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, CorpusError) as exc:
        print(f"qdetect {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
