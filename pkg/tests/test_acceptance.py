"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that pytest prints in an
"acceptance criteria" section at the end of the run.
"""
import json
import math
import time

import numpy as np
import pytest

from qdetect import kernels
from qdetect.corpus import TaskMode, average_pairwise_kappa, save_corpus
from qdetect.metrics import macro_micro, roc_auc
from qdetect.model import QuestionDetector
from qdetect.synthetic import interrogative_corpus, kappa_fixture, keyword_corpus, word_order_corpus
from qdetect.tasks import MultiTaskHead, bce_loss, multi_task_loss, two_way_loss
from qdetect.text import build_vocab

from clihelp import run
from gradcheck import max_rel_error, numeric_grad
from helpers import tiny_config
from oracles import auc_pairwise, kappa_exact, table_metrics


def report(criterion, number, name, passed, detail):
    line = criterion(number, name, passed, detail)
    print(f"[{'PASS' if line else 'FAIL'}] criterion {number}: {name} {detail}")
    return passed


def eval_metrics(checkpoint, data, *extra):
    code, out, err = run("eval", "--checkpoint", checkpoint, "--data", data, *extra)
    assert code == 0, err
    return json.loads(out)


# --- 1 -----------------------------------------------------------------------


def _gradcheck_model(task, rng):
    texts = ["is it here ?", "it is here .", "what now", "so we have the answer ."]
    vocab = build_vocab(texts)
    config = tiny_config(vocab.size, max_len=8)
    if task is TaskMode.TWO_WAY:
        model = QuestionDetector.init(config, task, vocab)
        targets = np.array([0, 1, 0, 1])
        per_example = two_way_loss
    else:
        base = QuestionDetector.init(config, task, vocab)
        head = MultiTaskHead.init(config.d_model, 3, config.head_sizes, rng)
        model = QuestionDetector(config, task, vocab, base.enc_params, head)
        targets = np.array([0, 2, 1, 2])
        per_example = lambda p, t: multi_task_loss(p, t, 3)
    # move everything off its initial value so no gradient is structurally tiny
    for arr in model.parameters().values():
        arr += 0.1 * rng.normal(size=arr.shape)
    ids, mask = model.encode(texts)

    def objective():
        probs, _ = model.forward(ids, mask)
        return sum(per_example(p, t) for p, t in zip(probs, targets)) / len(targets)

    loss, grads = model.loss_and_grads(ids, mask, targets)
    assert loss == pytest.approx(objective(), rel=1e-12)
    worst = 0.0
    for name, arr in model.parameters().items():
        worst = max(worst, max_rel_error(grads[name], numeric_grad(objective, arr, step=1e-4)))
    return worst


def test_criterion_1_gradient_exactness(criterion):
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    worst = {}
    previous = kernels.backend
    for backend in kernels.available_backends():
        kernels.use_backend(backend)
        try:
            for task in TaskMode:
                worst[f"{backend}/{task.value}"] = _gradcheck_model(task, rng)
        finally:
            kernels.use_backend(previous)
    elapsed = time.perf_counter() - start
    ok = max(worst.values()) < 1e-4 and elapsed < 60
    detail = f"max rel err {max(worst.values()):.2e} over {sorted(worst)}, {elapsed:.1f}s"
    report(criterion, 1, "gradient exactness", ok, detail)
    assert ok, detail


# --- 2 -----------------------------------------------------------------------


def test_criterion_2_loss_identities(criterion):
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(1000):
        m = int(rng.integers(2, 8))
        p = rng.uniform(1e-9, 1 - 1e-9, size=m)
        t = int(rng.integers(m))
        explicit = math.fsum(bce_loss(p[i], int(i == t)) for i in range(m))
        worst = max(worst, abs(multi_task_loss(p, t, m) - explicit) / explicit)
    half = max(abs(bce_loss(0.5, y) - math.log(2)) for y in (0, 1))
    uniform = max(abs(multi_task_loss(np.full(5, 0.5), t, 5) - 5 * math.log(2)) for t in range(5))
    ok = worst <= 1e-15 and half <= 1e-12 and uniform <= 1e-9
    detail = f"sum rel dev {worst:.1e}, bce(0.5) dev {half:.1e}, uniform dev {uniform:.1e}"
    report(criterion, 2, "loss identities", ok, detail)
    assert ok, detail


# --- 3 -----------------------------------------------------------------------


def test_criterion_3_metric_oracles(criterion):
    rng = np.random.default_rng(3)
    micro_exact = True
    worst = 0.0
    n_tables = 0
    for k in (2, 5):
        for _ in range(500):
            table = rng.integers(0, 21, size=(k, k))
            if table.sum() == 0:
                table[0, 0] = 1
            rep = macro_micro(table)
            exact = table_metrics(table.tolist())
            micro_exact &= rep.mi_f1 == rep.accuracy
            worst = max(worst, *(abs(getattr(rep, key) - float(v)) for key, v in exact.items()))
            n_tables += 1
    auc_exact = True
    n_auc = 0
    while n_auc < 500:
        size = int(rng.integers(2, 51))
        labels = rng.integers(0, 2, size=size)
        if labels.min() == labels.max():
            continue
        # coarse scores so ties are common
        scores = rng.integers(0, 8, size=size) / 7.0
        auc_exact &= roc_auc(scores, labels) == float(auc_pairwise(scores.tolist(), labels.tolist()))
        n_auc += 1
    ok = micro_exact and worst <= 1e-12 and auc_exact
    detail = f"{n_tables} tables, max dev {worst:.1e}, micro==acc {micro_exact}; {n_auc} AUC sets exact {auc_exact}"
    report(criterion, 3, "metric oracle equivalence", ok, detail)
    assert ok, detail


# --- 4 and 8 share the trained two-way model -----------------------------------

TWO_WAY_MODEL = [
    "--set", "max_len=24", "--set", "d_model=32", "--set", "n_heads=4", "--set", "n_layers=2",
    "--set", "d_ff=64", "--set", "head_sizes=[64,32]", "--set", "epochs=20",
    "--set", "batch_size=32", "--set", "learning_rate=0.001", "--seed", "0",
]


@pytest.fixture(scope="module")
def interrogative_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("interrogative")
    save_corpus(interrogative_corpus(2000, seed=0), root / "corpus.jsonl")
    code, _, err = run("split", "--corpus", root / "corpus.jsonl", "--seed", 0, "--out", root / "split")
    assert code == 0, err
    start = time.perf_counter()
    code, _, err = run("train", "--task", "two-way", "--split-dir", root / "split", "--out", root / "model",
                       *TWO_WAY_MODEL)
    assert code == 0, err
    return root, time.perf_counter() - start


def test_criterion_4_two_way_learning(criterion, interrogative_run):
    root, elapsed = interrogative_run
    metrics = eval_metrics(root / "model" / "best.ckpt", root / "split" / "test.jsonl")
    epochs = len(json.loads((root / "model" / "report.json").read_text())["history"])
    ok = metrics["accuracy"] >= 0.95 and epochs <= 20 and elapsed < 600
    detail = f"test accuracy {metrics['accuracy']:.4f} (n={metrics['n']}), {epochs} epochs, train {elapsed:.0f}s"
    report(criterion, 4, "synthetic two-way learning", ok, detail)
    assert ok, detail


def test_criterion_8_robustness_curve(criterion, interrogative_run):
    root, _ = interrogative_run
    test_file = root / "split" / "test.jsonl"
    accuracies = []
    rates = {}
    for name, spec in (("0", "0,0,0"), ("0.14", "0.07,0.035,0.035"), ("0.28", "0.14,0.07,0.07")):
        out = root / f"perturb_{name}"
        code, stdout, err = run("perturb", "--corpus", test_file, "--rates", spec, "--seed", 0,
                                "--vocab", root / "model" / "vocab.json", "--out", out)
        assert code == 0, err
        rates[name] = json.loads(stdout)["operation_rate"]
        accuracies.append(eval_metrics(root / "model" / "best.ckpt", out / "corpus.jsonl")["accuracy"])
    ok = all(a >= b for a, b in zip(accuracies, accuracies[1:]))
    detail = "accuracy " + ", ".join(
        f"{name}->{acc:.4f} (measured op rate {rates[name]:.3f})" for name, acc in zip(rates, accuracies)
    )
    report(criterion, 8, "robustness degradation curve", ok, detail)
    assert ok, detail


# --- 5 -----------------------------------------------------------------------


def test_criterion_5_order_sensitivity(criterion, tmp_path):
    save_corpus(word_order_corpus(2000, seed=0), tmp_path / "corpus.jsonl")
    assert run("split", "--corpus", tmp_path / "corpus.jsonl", "--seed", 0, "--out", tmp_path / "split")[0] == 0
    code, _, err = run("train", "--task", "two-way", "--split-dir", tmp_path / "split", "--out", tmp_path / "model",
                       *TWO_WAY_MODEL[2:], "--set", "max_len=16")
    assert code == 0, err
    transformer = eval_metrics(tmp_path / "model" / "best.ckpt", tmp_path / "split" / "test.jsonl")["accuracy"]
    code, _, err = run("baseline", "--kind", "lr", "--task", "two-way", "--split-dir", tmp_path / "split",
                       "--embeddings-from", tmp_path / "model" / "best.ckpt", "--out", tmp_path / "lr")
    assert code == 0, err
    lr = eval_metrics(tmp_path / "lr" / "lr.ckpt", tmp_path / "split" / "test.jsonl")["accuracy"]
    ok = transformer - lr >= 0.15 and lr <= 0.65
    detail = f"transformer {transformer:.4f}, averaged-embedding LR {lr:.4f}, gap {transformer - lr:.4f}"
    report(criterion, 5, "context-sensitivity ordering", ok, detail)
    assert ok, detail


# --- 6 -----------------------------------------------------------------------


def test_criterion_6_multi_way_decode(criterion, tmp_path):
    save_corpus(keyword_corpus(2000, seed=0), tmp_path / "corpus.jsonl")
    assert run("split", "--corpus", tmp_path / "corpus.jsonl", "--seed", 0, "--out", tmp_path / "split")[0] == 0
    code, _, err = run("train", "--task", "multi-way", "--split-dir", tmp_path / "split", "--out", tmp_path / "model",
                       *TWO_WAY_MODEL[2:], "--set", "max_len=16", "--set", "epochs=8",
                       "--set", "selection_metric=macro_f1")
    assert code == 0, err
    test_file = tmp_path / "split" / "test.jsonl"
    ckpt = tmp_path / "model" / "best.ckpt"
    metrics = eval_metrics(ckpt, test_file, "--predictions", tmp_path / "eval_preds.jsonl")
    stdin = "".join(
        json.dumps({"id": obj["id"], "text": obj["text"]}) + "\n"
        for obj in map(json.loads, test_file.read_text().splitlines())
    )
    code, predicted, err = run("predict", "--checkpoint", ckpt, "--stdin-jsonl", stdin=stdin)
    assert code == 0, err
    same = predicted.encode() == (tmp_path / "eval_preds.jsonl").read_bytes()
    ok = metrics["ma_f1"] >= 0.90 and same
    detail = f"macro-F1 {metrics['ma_f1']:.4f}, predict/eval byte-identical {same}"
    report(criterion, 6, "multi-task decode sanity", ok, detail)
    assert ok, detail


# --- 7 -----------------------------------------------------------------------


def test_criterion_7_agreement(criterion):
    # worked by hand: kappa(A,B) = (3/4 - 1/2) / (1/2) = 1/2, kappa(A,C) = 1, kappa(B,C) = 1/2
    a, b, c = [0, 0, 1, 1], [0, 1, 1, 1], [0, 0, 1, 1]
    hand = [
        ([a, b], 0.5),
        ([a, b, c], 2 / 3),
        ([[0, 0, 1], [0, 1, 1]], 0.4),
        ([[3, 3, 3], [3, 3, 3]], 1.0),
        ([[0, 1, 0, 1], [1, 0, 1, 0]], -1.0),
    ]
    hand_dev = max(abs(average_pairwise_kappa(m) - v) for m, v in hand)
    matrix, kappa = kappa_fixture(target=0.696, seed=0)
    rows = matrix.tolist()
    pairs = [(i, j) for i in range(len(rows)) for j in range(i + 1, len(rows))]
    exact = sum(kappa_exact(rows[i], rows[j]) for i, j in pairs) / len(pairs)
    oracle_dev = abs(kappa - float(exact))
    ok = hand_dev <= 1e-12 and oracle_dev <= 1e-12 and abs(kappa - 0.696) <= 0.01 and matrix.shape[0] == 5
    detail = f"hand fixtures dev {hand_dev:.1e}; 5-annotator fixture kappa {kappa:.4f} (exact oracle dev {oracle_dev:.1e})"
    report(criterion, 7, "agreement tooling", ok, detail)
    assert ok, detail


# --- 9 -----------------------------------------------------------------------


def _snapshot(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir()) if p.is_file()}


def test_criterion_9_determinism(criterion, tmp_path):
    save_corpus(interrogative_corpus(200, seed=9), tmp_path / "corpus.jsonl")
    small = [
        "--set", "max_len=16", "--set", "d_model=8", "--set", "n_heads=2", "--set", "n_layers=1",
        "--set", "d_ff=16", "--set", "head_sizes=[8,4]", "--set", "epochs=2", "--seed", 3,
    ]
    commands = {
        "split": ["split", "--corpus", tmp_path / "corpus.jsonl", "--seed", 5, "--out", tmp_path / "split"],
        "train": ["train", "--task", "two-way", "--split-dir", tmp_path / "split", "--out", tmp_path / "model", *small],
        "perturb": ["perturb", "--corpus", tmp_path / "corpus.jsonl", "--seed", 5, "--out", tmp_path / "perturb"],
    }
    first = {}
    for name, argv in commands.items():
        assert run(*argv)[0] == 0
        first[name] = _snapshot(argv[argv.index("--out") + 1])
    identical = {}
    for name, argv in commands.items():
        assert run(*argv)[0] == 0
        identical[name] = _snapshot(argv[argv.index("--out") + 1]) == first[name]
    ok = all(identical.values())
    files = {name: sorted(snap) for name, snap in first.items()}
    detail = f"byte-identical {identical} over {files}"
    report(criterion, 9, "determinism", ok, detail)
    assert ok, detail
