import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vchar.errors import InputError, LabelError
from vchar.metrics import (MetricsReport, atomic_accuracy, build_report, confusion, macro_f1,
                           macro_f1_from_counts, normalize_rows, parse_confusion_tsv, per_class_prf)

EXAMPLE = [0.95, 0.80, 0.10, 0.05]


def test_atomic_accuracy_examples():
    assert atomic_accuracy([EXAMPLE], [{0, 1}], 0.4) == 1.0
    assert atomic_accuracy([EXAMPLE], [{0, 1, 2}], 0.4) == pytest.approx(2 / 3, abs=1e-15)
    for n in (3, 5, 9):
        assert atomic_accuracy([np.full(n, 1 / n)], [{0}], 0.4) == 0.0


def test_atomic_accuracy_averages_windows():
    assert atomic_accuracy([EXAMPLE, EXAMPLE], [{0, 1}, {2, 3}]) == 0.5


def test_atomic_accuracy_precision_reading():
    assert atomic_accuracy([EXAMPLE], [{0, 2}], mode="precision") == 0.5
    assert atomic_accuracy([[0.1, 0.1]], [{0}], mode="precision") == 0.0


def test_atomic_accuracy_errors():
    with pytest.raises(InputError):
        atomic_accuracy([EXAMPLE], [set()])
    with pytest.raises(InputError):
        atomic_accuracy([EXAMPLE], [{0}, {1}])
    with pytest.raises(InputError):
        atomic_accuracy([EXAMPLE], [{0}], threshold=1.5)


def test_macro_f1_examples():
    a, b = 0, 1
    assert macro_f1([a, b, b, b], [a, a, b, b], 2) == pytest.approx(0.73333333333, abs=1e-9)
    assert macro_f1([a, b, b, b], [a, a, b, b], 2) == pytest.approx((2 / 3 + 4 / 5) / 2, abs=1e-15)
    assert macro_f1([0, 1, 2], [0, 1, 2], 3) == 1.0
    p, r, f = per_class_prf(confusion([b, b, b, b], [a, a, b, b], 2))
    assert f[0] == 0.0 and p[0] == 0.0 and r[0] == 0.0


def test_macro_f1_ignores_unsupported_classes():
    # class 2 never occurs in the truth, so it does not drag the average down
    assert macro_f1([0, 1], [0, 1], 3) == 1.0


def test_label_range():
    with pytest.raises(LabelError):
        macro_f1([0, 2], [0, 1], 2)


def test_confusion_examples():
    assert np.array_equal(confusion([0, 1, 1, 1], [0, 0, 1, 1], 2, normalize=True), [[0.5, 0.5], [0.0, 1.0]])
    assert np.array_equal(confusion([0, 1, 2], [0, 1, 2], 3, normalize=True), np.eye(3))
    counts = confusion([0, 1, 1, 1], [0, 0, 1, 1], 2)
    assert counts.tolist() == [[1, 1], [0, 2]]


labels = st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=40)


@given(labels)
def test_normalized_rows_sum_to_zero_or_one(pairs):
    pred, true = zip(*pairs)
    rows = normalize_rows(confusion(pred, true, 4)).sum(axis=1)
    assert all(abs(r - 1) < 1e-9 or r == 0 for r in rows)


@given(labels, st.randoms(use_true_random=False))
def test_macro_f1_permutation_invariant_and_equivariant(pairs, rnd):
    pred, true = zip(*pairs)
    base = macro_f1(pred, true, 4)
    order = list(range(len(pairs)))
    rnd.shuffle(order)
    assert macro_f1([pred[i] for i in order], [true[i] for i in order], 4) == pytest.approx(base, abs=1e-12)
    relabel = [2, 0, 3, 1]
    assert macro_f1([relabel[p] for p in pred], [relabel[t] for t in true], 4) == pytest.approx(base, abs=1e-12)
    assert macro_f1_from_counts(confusion(pred, true, 4)) == pytest.approx(base, abs=1e-12)


@given(st.lists(st.lists(st.floats(0, 1), min_size=4, max_size=4), min_size=1, max_size=10),
       st.floats(0.01, 0.98), st.floats(0.0, 0.5))
def test_atomic_accuracy_monotone_in_threshold(preds, t, dt):
    truths = [{0, 2}] * len(preds)
    hi = min(t + dt, 0.99)
    assert atomic_accuracy(preds, truths, hi) <= atomic_accuracy(preds, truths, t)


def test_report_serialisation_and_consistency():
    rep = build_report([0, 1, 1, 1], [0, 0, 1, 1], 2, [EXAMPLE], [{0, 1}], class_names=["A", "B"])
    d = json.loads(rep.to_json())
    assert d["threshold"] == 0.4
    assert d["char_f1"] == pytest.approx((2 / 3 + 4 / 5) / 2)
    assert MetricsReport.from_dict(d).to_json() == rep.to_json()
    for p, r, f in zip(rep.precision, rep.recall, rep.f1):
        assert f == pytest.approx(2 * p * r / (p + r) if p + r else 0.0)
    names, mat = parse_confusion_tsv(rep.confusion_tsv())
    assert names == ["A", "B"]
    assert np.array_equal(mat, rep.confusion)
