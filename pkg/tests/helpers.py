"""Small shared builders for model-level tests."""
from qdetect.corpus import DatasetSplit, QuestionLabel, TaskMode, UtteranceRecord
from qdetect.encoder import ModelConfig
from qdetect.model import QuestionDetector
from qdetect.text import build_vocab


def tiny_config(vocab_size, **kw):
    base = dict(
        vocab_size=vocab_size, max_len=12, d_model=8, n_heads=2, n_layers=1, d_ff=16,
        dropout_rate=0.0, head_sizes=(8, 4), seed=0,
    )
    base.update(kw)
    return ModelConfig(**base)


def toy_records():
    return [
        UtteranceRecord("a", "is it right ?", [QuestionLabel.KQ], QuestionLabel.KQ),
        UtteranceRecord("b", "it is here .", [QuestionLabel.NQ], QuestionLabel.NQ),
    ]


def tiny_detector(records, task=TaskMode.TWO_WAY, **kw):
    vocab = build_vocab(records)
    return QuestionDetector.init(tiny_config(vocab.size, **kw), task, vocab)


def split_of(records):
    return DatasetSplit(list(records), list(records), list(records))
