from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qdetect.metrics import (
    MetricsError,
    binary_metrics,
    confusion,
    macro_micro,
    multi_way_report,
    per_class,
    roc_auc,
    two_way_report,
)

from oracles import auc_pairwise, table_metrics


def test_confusion_small():
    assert confusion([0, 1, 1], [0, 0, 1], 2).tolist() == [[1, 0], [1, 1]]
    with pytest.raises(MetricsError):
        confusion([0, 1], [0], 2)
    with pytest.raises(MetricsError):
        confusion([0, 2], [0, 1], 2)


def test_binary_metrics_example():
    # positive class at index 0: TP=3, FN=2 / FP=1, TN=4
    table = np.array([[3, 2], [1, 4]])
    acc, p, r, f = binary_metrics(table, positive=0)
    assert acc == pytest.approx(0.7)
    assert p == pytest.approx(0.75)
    assert r == pytest.approx(0.6)
    assert f == pytest.approx(2 / 3)
    # the same counts seen with positive=1
    acc1, p1, r1, _ = binary_metrics(table[::-1, ::-1], positive=1)
    assert (acc1, p1, r1) == pytest.approx((0.7, 0.75, 0.6))


def test_zero_denominators():
    _, p, r, f = binary_metrics(np.array([[0, 0], [0, 5]]), positive=0)
    assert (p, r, f) == (0.0, 0.0, 0.0)
    prec, rec, f1 = per_class(np.array([[2, 0, 0], [1, 0, 0], [0, 0, 3]]))
    assert prec[1] == 0.0 and rec[1] == 0.0 and f1[1] == 0.0


def test_macro_f1_three_class_table():
    table = [[5, 1, 0], [2, 3, 1], [0, 1, 4]]
    expected = table_metrics(table)
    report = macro_micro(np.array(table))
    for key in ("accuracy", "ma_pre", "ma_rec", "ma_f1", "mi_f1"):
        assert getattr(report, key) == pytest.approx(float(expected[key]), abs=1e-15)
    # hand value of the macro F1 for this table
    f = [Fraction(10, 13), Fraction(6, 11), Fraction(4, 5)]
    assert expected["ma_f1"] == sum(f) / 3


def test_auc_example():
    assert roc_auc([0.9, 0.8, 0.7, 0.6], [1, 0, 1, 0]) == pytest.approx(0.75)
    assert roc_auc([0.5, 0.5], [1, 0]) == pytest.approx(0.5)
    with pytest.raises(MetricsError):
        roc_auc([0.1, 0.2], [1, 1])


def test_two_way_report_single_class_warns():
    with pytest.warns(UserWarning, match="AUC undefined"):
        rep = two_way_report([0, 0, 0], [0, 1, 0], [0.9, 0.4, 0.8])
    assert rep.auc is None
    assert rep.to_json()["auc"] is None


def test_two_way_report_positive_is_q():
    rep = two_way_report([0, 0, 1, 1], [0, 1, 1, 1], [0.9, 0.4, 0.3, 0.1])
    assert rep.binary["precision"] == 1.0 and rep.binary["recall"] == 0.5
    assert rep.auc == 1.0
    js = rep.to_json()
    assert {"accuracy", "ma_pre", "ma_rec", "mi_f1", "ma_f1", "precision", "recall", "f1", "auc"} <= set(js)


def test_multi_way_report_labels():
    rep = multi_way_report([0, 1, 2, 3, 4], [0, 1, 2, 3, 3], ["KQ", "OQ", "PQ", "DQ", "NQ"])
    assert rep.to_json()["per_class"]["NQ"]["recall"] == 0.0
    assert rep.metric("macro_f1") == rep.ma_f1
    with pytest.raises(MetricsError):
        rep.metric("auc")


tables = st.integers(2, 5).flatmap(
    lambda k: st.lists(st.lists(st.integers(0, 20), min_size=k, max_size=k), min_size=k, max_size=k)
)


@given(tables)
def test_table_metrics_match_exact_oracle(table):
    expected = table_metrics(table)
    rep = macro_micro(np.array(table))
    for key, val in expected.items():
        assert getattr(rep, key) == pytest.approx(float(val), abs=1e-12)
    assert rep.mi_f1 == rep.accuracy
    assert 0.0 <= rep.ma_f1 <= 1.0
    for p, r, f in zip(rep.precision, rep.recall, rep.f1):
        if p + r > 0:
            assert f == pytest.approx(2 * p * r / (p + r), abs=1e-12)


score_sets = st.lists(
    st.tuples(st.integers(0, 6).map(lambda v: v / 6), st.integers(0, 1)), min_size=2, max_size=30
).filter(lambda xs: len({y for _, y in xs}) == 2)


@given(score_sets)
def test_auc_matches_pairwise_count(pairs):
    s = [a for a, _ in pairs]
    y = [b for _, b in pairs]
    expected = float(auc_pairwise(s, y))
    assert roc_auc(s, y) == pytest.approx(expected, abs=1e-12)
    # strictly increasing transform leaves it unchanged
    assert roc_auc([np.exp(3 * v) - 1 for v in s], y) == pytest.approx(expected, abs=1e-12)
    # flipping labels gives the complement
    assert roc_auc(s, [1 - v for v in y]) == pytest.approx(1 - expected, abs=1e-12)
