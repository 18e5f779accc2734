import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from fewshot_osr.errors import DataError
from fewshot_osr.evaluation import (bipartition_report, classification_report, confusion_matrix,
                                    end_to_end_report)
from fewshot_osr.gallery import QueryNeighborhood
from fewshot_osr.numeric import make_rng
from fewshot_osr.recognizer import RecognitionResult

_HOOD = QueryNeighborhood((0.0,), ("x",), (0,), 0.0)


def result(pred):
    if pred == "Novel":
        return RecognitionResult(True, None, 1.0, None, _HOOD)
    return RecognitionResult(False, pred, 0.1, {pred: 1}, _HOOD)


def test_bipartition_all_correct():
    rep = bipartition_report([True, False, False, True], [True, False, False, True])
    assert rep.f1.weighted_f1 == 1.0 and rep.novel_f1 == 1.0


def test_bipartition_all_flipped():
    rep = bipartition_report([True, False, True, False], [False, True, False, True])
    assert rep.f1.weighted_f1 == 0.0
    assert rep.confusion.counts.tolist() == [[0, 2], [2, 0]]


def test_bipartition_matches_scalar_oracle():
    rng = make_rng(0)
    for _ in range(30):
        a = (rng.random(30) < 0.4).tolist()
        p = (rng.random(30) < 0.5).tolist()
        rep = bipartition_report(a, p)
        lab = lambda xs: ["N" if x else "K" for x in xs]
        assert abs(rep.f1.weighted_f1 - oracles.weighted_f1(lab(a), lab(p))) <= 1e-12
        tp = sum(x and y for x, y in zip(a, p))
        fp = sum((not x) and y for x, y in zip(a, p))
        fn = sum(x and not y for x, y in zip(a, p))
        binary = 2 * tp / (2 * tp + fp + fn) if tp else 0.0
        assert rep.novel_f1 == pytest.approx(binary, abs=1e-12)


def test_bipartition_equals_general_report():
    rng = make_rng(1)
    a = (rng.random(40) < 0.5).tolist()
    p = (rng.random(40) < 0.5).tolist()
    bip = bipartition_report(a, p)
    _, gen = classification_report(["Novel" if x else "Known" for x in a], ["Novel" if x else "Known" for x in p])
    assert bip.f1.weighted_f1 == gen.weighted_f1


def test_length_mismatch():
    with pytest.raises(DataError):
        bipartition_report([True], [True, False])
    with pytest.raises(DataError):
        classification_report(["a"], [])


def test_perfect_classification():
    a = ["x", "y", "z", "x"]
    _, rep = classification_report(a, a)
    assert all(v == 1.0 for v in rep.per_class_f1.values()) and rep.weighted_f1 == 1.0


def test_never_predicted_class_scores_zero():
    _, rep = classification_report(["a", "b", "c"], ["a", "b", "b"])
    assert rep.per_class_f1["c"] == 0.0 and rep.precision["c"] == 0.0


def test_classification_matches_tally():
    rng = make_rng(2)
    names = ["w", "x", "y", "z"]
    a = [names[i] for i in rng.integers(0, 4, size=50)]
    p = [names[i] for i in rng.integers(0, 4, size=50)]
    cm, rep = classification_report(a, p)
    for i, c in enumerate(cm.labels):
        for j, d in enumerate(cm.labels):
            assert cm.counts[i, j] == sum(1 for u, v in zip(a, p) if u == c and v == d)
    assert cm.counts.sum(axis=1).tolist() == [rep.support[c] for c in cm.labels]
    assert abs(rep.weighted_f1 - oracles.weighted_f1(a, p)) <= 1e-12


@given(st.integers(0, 10_000))
def test_weighted_f1_invariant_under_renaming(seed):
    rng = make_rng(seed)
    a = [f"c{i}" for i in rng.integers(0, 4, size=25)]
    p = [f"c{i}" for i in rng.integers(0, 4, size=25)]
    rename = {f"c{i}": f"zz{j}" for i, j in enumerate(rng.permutation(4))}
    _, r1 = classification_report(a, p)
    _, r2 = classification_report([rename[x] for x in a], [rename[x] for x in p])
    assert r1.weighted_f1 == pytest.approx(r2.weighted_f1, abs=1e-12)


def test_confusion_total():
    cm = confusion_matrix(["a", "b", "b"], ["b", "b", "a"])
    assert cm.total == 3 and cm.labels == ["a", "b"]


def test_end_to_end_all_correct():
    labels = ["A", "B", "N1", "A"]
    novel = [False, False, True, False]
    rep = end_to_end_report(labels, novel, [result(p) for p in ["A", "B", "Novel", "A"]])
    s = rep.summary()
    assert s["bipartition_weighted_f1"] == 1.0 and s["known_types_weighted_f1"] == 1.0
    assert s["all_classes_weighted_f1"] == 1.0


def test_end_to_end_all_known_rejected():
    labels = ["A", "B", "N1"]
    novel = [False, False, True]
    rep = end_to_end_report(labels, novel, [result("Novel")] * 3)
    assert rep.bipartition.fpr == 1.0
    assert rep.known_types[1].weighted_f1 == 0.0
    assert rep.known_types[1].recall["A"] == 0.0


def test_end_to_end_composes_oracles():
    rng = make_rng(3)
    labels, novel, preds = [], [], []
    for _ in range(60):
        is_novel = rng.random() < 0.3
        labels.append("N" if is_novel else f"K{rng.integers(3)}")
        novel.append(is_novel)
        preds.append("Novel" if rng.random() < 0.35 else f"K{rng.integers(3)}")
    rep = end_to_end_report(labels, novel, [result(p) for p in preds])
    truth = ["Novel" if n else l for l, n in zip(labels, novel)]
    lab = lambda flags: ["N" if f else "K" for f in flags]
    assert abs(rep.bipartition.f1.weighted_f1 - oracles.weighted_f1(lab(novel), lab([p == "Novel" for p in preds]))) <= 1e-12
    assert abs(rep.all_classes[1].weighted_f1 - oracles.weighted_f1(truth, preds)) <= 1e-12
    ki = [i for i, n in enumerate(novel) if not n]
    assert abs(rep.known_types[1].weighted_f1 - oracles.weighted_f1([truth[i] for i in ki], [preds[i] for i in ki])) <= 1e-12
