"""Matching, accuracy, AUROC and error-taxonomy oracles."""

import itertools

import numpy as np
import pytest

from gcdlib import metrics
from gcdlib.errors import DimensionError, EvalError


def brute_force_match(confusion):
    """First maximizer in lexicographic enumeration (== lexicographically
    smallest optimal permutation)."""
    k = confusion.shape[0]
    best_perm, best_mass = None, -1
    for perm in itertools.permutations(range(k)):
        mass = sum(confusion[perm[col], col] for col in range(k))
        if mass > best_mass:
            best_perm, best_mass = perm, mass
    return np.array(best_perm), best_mass


def pairwise_auroc(scores, is_new):
    """O(n^2) comparison oracle: wins + half-ties over all old/new pairs."""
    new_scores = scores[is_new]
    old_scores = scores[~is_new]
    wins = sum((n > o) + 0.5 * (n == o) for n in new_scores for o in old_scores)
    return wins / (len(new_scores) * len(old_scores))


class TestHungarian:
    def test_diagonal(self):
        h = metrics.hungarian_match(np.diag([2, 3]))
        assert np.array_equal(h, [0, 1])

    def test_anti_diagonal(self):
        h = metrics.hungarian_match(np.array([[0, 5], [5, 0]]))
        assert np.array_equal(h, [1, 0])

    def test_random_5x5_vs_brute_force(self):
        rng = np.random.default_rng(0)
        confusion = rng.integers(0, 10, size=(5, 5))
        h = metrics.hungarian_match(confusion)
        expected, mass = brute_force_match(confusion)
        assert np.array_equal(h, expected)
        assert confusion[h, np.arange(5)].sum() == mass

    def test_all_ties_lexicographic(self):
        h = metrics.hungarian_match(np.ones((4, 4), dtype=int))
        assert np.array_equal(h, [0, 1, 2, 3])

    def test_non_square_rejected(self):
        with pytest.raises(DimensionError):
            metrics.hungarian_match(np.zeros((2, 3)))

    def test_oracle_sweep(self):
        rng = np.random.default_rng(1)
        for trial in range(60):
            k = int(rng.integers(2, 7))
            high = int(rng.integers(2, 8))  # small counts force frequent ties
            confusion = rng.integers(0, high, size=(k, k))
            h = metrics.hungarian_match(confusion)
            expected, _ = brute_force_match(confusion)
            assert np.array_equal(h, expected), (confusion, h, expected)


class TestAccuracy:
    def test_perfect(self):
        gt = np.array([0, 1, 2, 3, 0, 2])
        assert metrics.gcd_accuracy(gt, gt, 2) == (1.0, 1.0, 1.0)

    def test_global_permutation_invariance(self):
        rng = np.random.default_rng(2)
        gt = rng.integers(0, 5, size=40)
        relabel = np.array([3, 0, 4, 1, 2])
        accs = metrics.gcd_accuracy(relabel[gt], gt, 2, num_classes=5)
        assert accs == (1.0, 1.0, 1.0)

    def test_hand_case_vs_oracle(self):
        # 6 rows, K=3, M=1; one old error, one new error
        gt = np.array([0, 0, 1, 1, 2, 2])
        pred = np.array([0, 1, 1, 1, 2, 2])  # row1 wrong (old), row3 ok...
        conf = metrics.confusion_matrix(pred, gt, 3)
        h, _ = brute_force_match(conf)
        mapped = h[pred]
        expected_all = float((mapped == gt).mean())
        acc_all, acc_old, acc_new = metrics.gcd_accuracy(pred, gt, 1)
        assert acc_all == expected_all
        old = gt < 1
        assert acc_old == float((mapped == gt)[old].mean())
        assert acc_new == float((mapped == gt)[~old].mean())

    def test_weighted_mean_identity(self):
        rng = np.random.default_rng(3)
        gt = rng.integers(0, 6, size=100)
        pred = rng.integers(0, 6, size=100)
        acc_all, acc_old, acc_new = metrics.gcd_accuracy(pred, gt, 3, num_classes=6)
        n_old = (gt < 3).sum()
        n_new = (gt >= 3).sum()
        blended = (n_old * acc_old + n_new * acc_new) / (n_old + n_new)
        assert abs(acc_all - blended) < 1e-12

    def test_empty_rejected(self):
        with pytest.raises(EvalError):
            metrics.gcd_accuracy(np.array([], dtype=int), np.array([], dtype=int), 1)


class TestAuroc:
    def test_perfect_separation(self):
        scores = np.array([0.9, 0.8, 0.1, 0.2])
        is_new = np.array([True, True, False, False])
        assert metrics.auroc(scores, is_new) == 1.0

    def test_all_tied(self):
        scores = np.full(6, 0.4)
        is_new = np.array([True, False] * 3)
        assert metrics.auroc(scores, is_new) == 0.5

    def test_pairwise_oracle_example(self):
        scores = np.array([0.9, 0.4, 0.6, 0.1])
        is_new = np.array([True, True, False, False])
        assert abs(metrics.auroc(scores, is_new) - 0.75) < 1e-12

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(4)
        scores = rng.random(50)
        is_new = rng.random(50) < 0.4
        base = metrics.auroc(scores, is_new)
        assert abs(metrics.auroc(np.exp(3 * scores), is_new) - base) < 1e-12

    def test_single_class_rejected(self):
        with pytest.raises(EvalError):
            metrics.auroc(np.array([0.1, 0.2]), np.array([True, True]))

    def test_oracle_sweep_with_ties(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            n = int(rng.integers(4, 30))
            scores = np.round(rng.random(n), 1)  # rounding injects ties
            is_new = rng.random(n) < 0.5
            if is_new.all() or not is_new.any():
                continue
            assert abs(metrics.auroc(scores, is_new) - pairwise_auroc(scores, is_new)) < 1e-12


class TestErrorBreakdown:
    def test_perfect_zero(self):
        gt = np.array([0, 1, 2, 3])
        out = metrics.error_breakdown(gt, gt, 2)
        assert all(v == 0.0 for v in out.values())

    def test_single_false_old(self):
        gt = np.array([0, 2, 2])
        mapped = np.array([0, 2, 1])  # one new-gt row sent to an old cluster
        out = metrics.error_breakdown(mapped, gt, 2)
        assert out["false_old"] == 0.5  # 1 of 2 new rows
        assert out["true_new"] == 0.0 and out["true_old"] == 0.0

    def test_mixed_hand_case_vs_enumeration(self):
        gt = np.array([0, 0, 1, 1, 2, 2, 3, 3])
        mapped = np.array([0, 1, 1, 2, 2, 0, 3, 2])
        out = metrics.error_breakdown(mapped, gt, 2)
        # exhaustive count: old rows = 4, new rows = 4
        # row1: gt0->1 (old->old) true_old; row3: gt1->2 (old->new) false_new
        # row5: gt2->0 (new->old) false_old; row7: gt3->2 (new->new) true_new
        assert out == {"true_old": 0.25, "false_new": 0.25,
                       "false_old": 0.25, "true_new": 0.25}


def test_utilization_split():
    weights = np.array([0.0, 0.5, 0.9, 0.0, 0.0, 1.0])
    gt = np.array([0, 0, 1, 4, 4, 4])
    old_ratio, new_ratio = metrics.utilization_split(weights, gt, 2)
    assert abs(old_ratio - 2.0 / 3.0) < 1e-12
    assert abs(new_ratio - 1.0 / 3.0) < 1e-12
    old_only, none_side = metrics.utilization_split(weights[:3], gt[:3], 5)
    assert none_side is None
