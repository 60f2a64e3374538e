"""Confusion matrix, accuracy, relative accuracy drop and per-class P/R/F."""

import numpy as np
import pytest

from sflpoison.metrics import (accuracy, accuracy_drop, confusion, per_class_prf,
                               per_class_recall)


def counting_loop_oracle(preds, labels, c):
    cm = np.zeros((c, c), dtype=np.int64)
    for p, a in zip(preds, labels):
        cm[a][p] += 1
    return cm


def test_confusion_perfect_predictions_diagonal():
    labels = np.array([0, 1, 2, 2, 1])
    cm = confusion(labels, labels, 3)
    assert np.array_equal(cm, np.diag([1, 2, 2]))


def test_confusion_single_sample_placement():
    cm = confusion(np.array([2]), np.array([1]), 3)
    expect = np.zeros((3, 3), dtype=np.int64)
    expect[1, 2] = 1
    assert np.array_equal(cm, expect)


def test_confusion_matches_loop_oracle():
    rng = np.random.default_rng(5)
    preds = rng.integers(0, 4, size=200)
    labels = rng.integers(0, 4, size=200)
    assert np.array_equal(confusion(preds, labels, 4),
                          counting_loop_oracle(preds, labels, 4))


def test_confusion_rejects_mismatch_and_range():
    with pytest.raises(ValueError, match="equal"):
        confusion(np.array([0, 1]), np.array([0]), 2)
    with pytest.raises(ValueError, match="preds"):
        confusion(np.array([0, 3]), np.array([0, 1]), 3)


def test_accuracy_extremes():
    assert accuracy(np.diag([5, 5])) == 100.0
    assert accuracy(np.array([[0, 3], [4, 0]])) == 0.0
    with pytest.raises(ValueError, match="empty"):
        accuracy(np.zeros((2, 2), dtype=np.int64))


def test_accuracy_random_matrix_vs_hand_count():
    cm = np.array([[5, 1, 0], [2, 7, 1], [0, 3, 6]])
    assert np.isclose(accuracy(cm), 100.0 * (5 + 7 + 6) / 25)


def test_accuracy_drop_reproduces_reported_values():
    assert abs(accuracy_drop(88.87, 33.87) - 61.89) <= 0.01
    assert abs(accuracy_drop(88.89, 75.00) - 15.62) <= 0.01


def test_accuracy_drop_identity_and_rejection():
    assert accuracy_drop(77.7, 77.7) == 0.0
    with pytest.raises(ValueError, match="positive"):
        accuracy_drop(0.0, 10.0)


def test_accuracy_drop_monotone_in_attacked():
    drops = [accuracy_drop(90.0, a) for a in (90.0, 80.0, 50.0, 10.0)]
    assert drops[0] == 0.0
    assert drops == sorted(drops)


def test_prf_perfect_predictions():
    cm = np.diag([4, 4, 4])
    assert per_class_prf(cm) == [(1.0, 1.0, 1.0)] * 3


def test_prf_zero_over_zero_convention():
    cm = np.array([[3, 0, 0], [0, 2, 0], [0, 0, 0]])
    assert per_class_prf(cm)[2] == (0.0, 0.0, 0.0)


def test_prf_two_class_hand_computation():
    cm = np.array([[8, 2], [1, 9]])
    p0, r0, f0 = per_class_prf(cm)[0]
    assert np.isclose(p0, 8 / 9)
    assert np.isclose(r0, 0.8)
    assert np.isclose(f0, 2 * (8 / 9 * 0.8) / (8 / 9 + 0.8))


def test_prf_requires_two_classes():
    with pytest.raises(ValueError):
        per_class_prf(np.array([[3]]))


def test_accuracy_equals_weighted_mean_of_recalls():
    rng = np.random.default_rng(9)
    cm = rng.integers(0, 20, size=(4, 4)).astype(np.int64)
    recalls = per_class_recall(cm)
    weights = cm.sum(axis=1) / cm.sum()
    assert np.isclose(accuracy(cm), 100.0 * float(recalls @ weights))


def test_metrics_invariant_under_pair_permutation():
    rng = np.random.default_rng(2)
    preds = rng.integers(0, 3, size=100)
    labels = rng.integers(0, 3, size=100)
    perm = rng.permutation(100)
    a = confusion(preds, labels, 3)
    b = confusion(preds[perm], labels[perm], 3)
    assert np.array_equal(a, b)
    assert per_class_prf(a) == per_class_prf(b)
