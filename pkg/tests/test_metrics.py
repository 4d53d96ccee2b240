import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from patchecg.gradcheck import check_gradients
from patchecg.head import Head, focal_loss_tensor
from patchecg.metrics import FocalConfig, auroc, confusion_metrics, focal_loss, metrics_report
from patchecg.tensor import Tensor


def brute_auroc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


# ---------------------------------------------------------------- head


def test_zero_head_gives_half():
    head = Head(4, 3, np.random.default_rng(0), np.float64)
    head.fc.weight.data[:] = 0
    head.fc.bias.data[:] = 0
    np.testing.assert_array_equal(head(Tensor(np.ones((2, 4)))).data, [0.5, 0.5, 0.5])


def test_head_example():
    head = Head(2, 3, np.random.default_rng(0), np.float64)
    head.fc.weight.data[:] = [[1, 0, 2], [0, 1, 0]]
    head.fc.bias.data[:] = 0
    h = Tensor(np.array([[1.0, -1.0], [9.0, 9.0]]))  # only row 0 is read
    np.testing.assert_allclose(head(h).data, [0.7311, 0.2689, 0.8808], atol=5e-5)


def test_head_monotone_in_bias():
    head = Head(2, 1, np.random.default_rng(0), np.float64)
    h = Tensor(np.array([[0.3, -0.2]]))
    outs = []
    for b in [-5.0, 0.0, 5.0, 20.0]:
        head.fc.bias.data[:] = b
        outs.append(head(h).item())
    assert outs == sorted(outs) and outs[-1] > 1 - 1e-8


def test_head_gradcheck():
    rng = np.random.default_rng(1)
    head = Head(4, 3, rng, np.float64)
    h = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    y = np.array([1, 0, 1])
    assert check_gradients(lambda: focal_loss_tensor(head(h), y), head.parameters() + [h]) <= 1e-3


# ---------------------------------------------------------------- focal loss


def test_focal_closed_form():
    assert focal_loss([1.0], [1]) < 1e-15
    assert abs(focal_loss([0.5], [1]) - 0.25 * 0.25 * math.log(2)) <= 1e-9
    assert abs(focal_loss([0.5], [0]) - 0.75 * 0.25 * math.log(2)) <= 1e-9
    assert abs(focal_loss([0.5], [1]) - 0.043322) < 1e-6
    assert abs(focal_loss([0.5], [0]) - 0.129966) < 1e-6


def test_focal_tensor_matches_numpy():
    p = np.array([0.1, 0.5, 0.93])
    y = np.array([0, 1, 1])
    assert abs(focal_loss_tensor(Tensor(p), y).item() - focal_loss(p, y)) < 1e-15


def test_focal_batch_reduction():
    p = np.array([[0.5, 0.5], [0.9, 0.2]])
    y = np.array([[1, 0], [1, 0]])
    per_record = [focal_loss(p[i], y[i]) for i in range(2)]
    assert abs(focal_loss(p, y) - np.mean(per_record)) < 1e-15


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(1e-6, 1 - 1e-6), st.integers(0, 1)), min_size=1, max_size=20))
def test_focal_reduces_to_half_bce(pairs):
    p = np.array([a for a, _ in pairs])
    y = np.array([b for _, b in pairs])
    bce = -np.mean(y * np.log(p) + (1 - y) * np.log(1 - p))
    assert abs(focal_loss(p, y, FocalConfig(alpha=0.5, gamma=0.0)) - 0.5 * bce) <= 1e-9
    assert focal_loss(p, y) > 0


def test_focal_rejects_bad_labels():
    with pytest.raises(ValueError):
        focal_loss([0.5], [2])
    with pytest.raises(ValueError):
        FocalConfig(alpha=1.5)


# ---------------------------------------------------------------- AUROC


def test_auroc_examples():
    assert auroc([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0
    assert auroc([0.5, 0.5], [1, 0]) == 0.5
    assert auroc([0.3, 0.8, 0.6, 0.1], [1, 0, 1, 0]) == 0.5
    assert auroc([0.3, 0.8], [1, 1]) is None


def test_auroc_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.integers(2, 101))
        scores = rng.integers(0, 10, n) / 10.0  # coarse grid forces ties
        labels = rng.integers(0, 2, n)
        labels[0], labels[1] = 0, 1
        assert auroc(scores, labels) == brute_auroc(scores, labels)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_auroc_monotone_invariance_and_complement(seed):
    rng = np.random.default_rng(seed)
    scores = rng.standard_normal(30)
    labels = np.r_[0, 1, rng.integers(0, 2, 28)]
    a = auroc(scores, labels)
    assert auroc(np.exp(3 * scores) + 1, labels) == a
    assert abs(a + auroc(scores, 1 - labels) - 1.0) < 1e-12


# ---------------------------------------------------------------- confusion


def test_confusion_examples():
    m = confusion_metrics([0.9, 0.2], [1, 0])
    assert m["accuracy"] == 1.0 and m["specificity"] == 1.0 and m["tp"] == 1 and m["tn"] == 1
    m = confusion_metrics([0.9, 0.9, 0.2, 0.2], [1, 0, 1, 0])
    for key in ("precision", "recall", "specificity", "f1", "accuracy"):
        assert m[key] == 0.5
    m = confusion_metrics([0.9, 0.1, 0.8], [1, 0, 1])
    assert all(m[k] == 1.0 for k in ("precision", "recall", "specificity", "f1", "accuracy"))


def test_confusion_zero_denominator_flagged():
    m = confusion_metrics([0.1, 0.2], [0, 0])
    assert m["precision"] == 0.0 and "precision" in m["undefined"] and "recall" in m["undefined"]


def test_report_json_and_absent_labels():
    scores = np.array([[0.9, 0.1], [0.2, 0.3], [0.7, 0.9]])
    labels = np.array([[1, 0], [0, 0], [1, 0]])
    report = metrics_report(scores, labels, ("NORM", "AF"))
    assert report.per_label["AF"]["auroc"] is None
    assert report.macro_auroc == 1.0
    d = json.loads(report.to_json())
    assert set(d) >= {"per_label", "macro_auroc", "threshold"}
    for entry in d["per_label"].values():
        for key in ("accuracy", "precision", "recall", "specificity", "f1"):
            assert 0.0 <= entry[key] <= 1.0
