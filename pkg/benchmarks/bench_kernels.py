"""Time the Cython kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat 20] [--batch 32]

Reports the best-of-N wall time per kernel and for one full training step
(forward + backward + Adam) of a desk-scale detector.
"""
import argparse
import timeit

import numpy as np

from qdetect import kernels
from qdetect.corpus import TaskMode
from qdetect.encoder import ModelConfig
from qdetect.model import QuestionDetector
from qdetect.synthetic import interrogative_corpus
from qdetect.text import build_vocab
from qdetect.train import adam_step


def kernel_cases(batch, seq_len, d_model, n_heads, rng):
    rows = batch * seq_len
    x = rng.normal(size=(rows, d_model))
    gain, bias = rng.normal(size=d_model), rng.normal(size=d_model)
    y, xhat, rstd = kernels.layernorm_forward(x, gain, bias, 1e-12)
    scores = rng.normal(size=(batch * n_heads, seq_len, seq_len))
    mask = (rng.random((batch * n_heads, seq_len)) < 0.8).astype(np.int8)
    mask[:, 0] = 1
    probs = kernels.masked_softmax_forward(scores, mask)
    hidden = rng.normal(size=(rows, 4 * d_model))
    return {
        "gelu_forward": lambda: kernels.gelu_forward(hidden),
        "gelu_backward": lambda: kernels.gelu_backward(hidden, hidden),
        "layernorm_forward": lambda: kernels.layernorm_forward(x, gain, bias, 1e-12),
        "layernorm_backward": lambda: kernels.layernorm_backward(x, xhat, rstd, gain),
        "masked_softmax_forward": lambda: kernels.masked_softmax_forward(scores, mask),
        "softmax_backward": lambda: kernels.softmax_backward(probs, scores),
    }


def train_step_case(batch, seq_len):
    records = interrogative_corpus(batch, seed=0)
    vocab = build_vocab(records)
    config = ModelConfig(vocab_size=vocab.size, max_len=seq_len, d_model=32, n_heads=4, n_layers=2, d_ff=64,
                         head_sizes=(64, 32))
    model = QuestionDetector.init(config, TaskMode.TWO_WAY, vocab)
    ids, mask = model.encode([r.text for r in records])
    targets = np.array([int(r.final_label.name == "NQ") for r in records])
    rng = np.random.default_rng(0)
    state = {}

    def step():
        _, grads = model.loss_and_grads(ids, mask, targets, training=True, rng=rng)
        adam_step(model.parameters(), grads, state, 1e-3)

    return step


def best_time(fn, repeat):
    fn()  # warm up
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--batch", type=int, default=32)
    ap.add_argument("--seq-len", type=int, default=24)
    ap.add_argument("--d-model", type=int, default=32)
    ap.add_argument("--heads", type=int, default=4)
    args = ap.parse_args()

    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled extension not built; only the python backend is available")
    results = {}
    for backend in backends:
        kernels.use_backend(backend)
        rng = np.random.default_rng(0)
        cases = kernel_cases(args.batch, args.seq_len, args.d_model, args.heads, rng)
        cases["train_step"] = train_step_case(args.batch, args.seq_len)
        for name, fn in cases.items():
            results.setdefault(name, {})[backend] = best_time(fn, args.repeat)

    header = f"{'case':<24}" + "".join(f"{b + ' (ms)':>16}" for b in backends)
    if len(backends) > 1:
        header += f"{'speedup':>10}"
    print(header)
    for name, times in results.items():
        line = f"{name:<24}" + "".join(f"{1e3 * times[b]:>16.3f}" for b in backends)
        if len(backends) > 1:
            line += f"{times['python'] / times['cython']:>9.2f}x"
        print(line)


if __name__ == "__main__":
    main()
