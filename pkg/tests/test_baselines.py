import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from qdetect.baselines import (
    BaselineClassifier,
    KNNModel,
    LRModel,
    avg_embed,
    knn_predict,
    knn_predict_proba,
    load_any,
    lr_predict,
    lr_predict_proba,
    lr_train,
)
from qdetect.corpus import TaskMode
from qdetect.model import QuestionDetector
from qdetect.text import CLS_ID, PAD_ID, build_vocab

from helpers import tiny_detector, toy_records


def test_avg_embed_basics(rng):
    emb = rng.normal(size=(10, 4))
    assert np.array_equal(avg_embed([5], emb), emb[5])
    np.testing.assert_allclose(avg_embed([5, 5, 7], emb), (2 * emb[5] + emb[7]) / 3)
    np.testing.assert_allclose(avg_embed([CLS_ID, 5, 7, PAD_ID, PAD_ID], emb), (emb[5] + emb[7]) / 2)
    assert avg_embed([CLS_ID, PAD_ID], emb).tolist() == [0.0] * 4


@given(st.lists(st.integers(3, 9), min_size=1, max_size=12), st.randoms(), st.floats(-5, 5))
def test_avg_embed_permutation_and_scale(ids, rnd, c):
    emb = np.random.default_rng(0).normal(size=(10, 3))
    shuffled = list(ids)
    rnd.shuffle(shuffled)
    np.testing.assert_allclose(avg_embed(ids, emb), avg_embed(shuffled, emb), atol=1e-12)
    np.testing.assert_allclose(avg_embed(ids, c * emb), c * avg_embed(ids, emb), atol=1e-12)


def test_lr_separates_two_points():
    model = lr_train(np.array([[1.0], [-1.0]]), [0, 1], K=2, epochs=200)
    assert lr_predict(model, np.array([2.0])).label == 0
    assert lr_predict(model, np.array([-2.0])).label == 1


def test_lr_zero_weights_uniform():
    model = LRModel(np.zeros((3, 4)), np.zeros(4))
    assert lr_predict_proba(model, np.ones(3)).tolist() == [[0.25] * 4]


def test_lr_conflicting_labels_near_uniform():
    x = np.array([[1.0, 2.0], [1.0, 2.0]])
    model = lr_train(x, [0, 1], K=2, l2=10.0, epochs=300)
    np.testing.assert_allclose(lr_predict_proba(model, x[:1])[0], [0.5, 0.5], atol=1e-6)


@given(arrays(np.float64, (6, 3), elements=st.floats(-10, 10)))
def test_lr_probabilities_sum_to_one(x):
    model = LRModel(np.random.default_rng(1).normal(size=(3, 5)), np.arange(5.0))
    p = lr_predict_proba(model, x)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
    assert (p >= 0).all()


def test_knn_examples():
    feats = np.array([[0.0], [1.0], [2.0], [3.0]])
    model = KNNModel(feats, np.array([0, 0, 1, 1]), 2, k=1)
    assert knn_predict(model, np.array([2.0])).label == 1
    everyone = KNNModel(feats, np.array([0, 1, 1, 1]), 2, k=4)
    assert knn_predict(everyone, np.array([-100.0])).label == 1
    # distances 1, 2, 3 with labels A, A, B and k=3
    m3 = KNNModel(np.array([[1.0], [2.0], [3.0]]), np.array([0, 0, 1]), 2, k=3)
    pred = knn_predict(m3, np.array([0.0]))
    assert pred.label == 0 and pred.probabilities[0] == pytest.approx(2 / 3)


def test_knn_validation():
    with pytest.raises(ValueError):
        KNNModel(np.zeros((0, 2)), np.zeros(0, dtype=int), 2, k=1)
    with pytest.raises(ValueError):
        KNNModel(np.zeros((3, 2)), np.zeros(3, dtype=int), 2, k=4)


def test_knn_invariant_to_isometry(rng):
    feats = rng.normal(size=(30, 4))
    labels = rng.integers(0, 3, size=30)
    queries = rng.normal(size=(10, 4))
    q, _ = np.linalg.qr(rng.normal(size=(4, 4)))
    shift = rng.normal(size=4)
    a = knn_predict_proba(KNNModel(feats, labels, 3, k=5), queries)
    b = knn_predict_proba(KNNModel(feats @ q + shift, labels, 3, k=5), queries @ q + shift)
    assert np.array_equal(a, b)


@pytest.mark.parametrize("kind", ["lr", "knn"])
def test_baseline_classifier_roundtrip(tmp_path, kind):
    recs = toy_records()
    det = tiny_detector(recs)
    emb = det.enc_params["tok_emb"]
    texts = [r.text for r in recs]
    kw = {"k": 1} if kind == "knn" else {}
    clf = BaselineClassifier.fit(kind, TaskMode.TWO_WAY, det.vocab, emb, texts, [0, 1], **kw)
    clf.save(tmp_path / "b.ckpt")
    back = load_any(tmp_path / "b.ckpt")
    assert isinstance(back, BaselineClassifier) and back.kind == kind
    assert np.array_equal(back.predict_proba(texts), clf.predict_proba(texts))
    det.save(tmp_path / "d.ckpt")
    assert isinstance(load_any(tmp_path / "d.ckpt"), QuestionDetector)


def test_unknown_kind():
    vocab = build_vocab(["a b"])
    with pytest.raises(ValueError):
        BaselineClassifier.fit("svm", TaskMode.TWO_WAY, vocab, np.zeros((vocab.size, 2)), ["a"], [0])
