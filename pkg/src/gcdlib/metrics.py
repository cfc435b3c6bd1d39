"""Clustering accuracy under an optimal cluster-to-class matching, rank-based
AUROC for the distribution detector, and the four-way error taxonomy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gcdlib import kernels
from gcdlib.errors import DimensionError, EvalError


@dataclass
class EvalReport:
    acc_all: float
    acc_old: float
    acc_new: float
    auroc: float | None
    error_ratios: dict  # keys true_old, false_new, false_old, true_new

    def as_dict(self) -> dict:
        def clean(x):
            if x is None or (isinstance(x, float) and not np.isfinite(x)):
                return None
            return float(x)

        return {
            "acc_all": clean(self.acc_all),
            "acc_old": clean(self.acc_old),
            "acc_new": clean(self.acc_new),
            "auroc": clean(self.auroc),
            "error_ratios": {k: clean(v) for k, v in self.error_ratios.items()},
        }


# ---------------------------------------------------------------------------
# assignment


def _assignment_value(confusion: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> int:
    """Max total count of a perfect matching between the given rows and cols."""
    if rows.size == 0:
        return 0
    sub = confusion[np.ix_(rows, cols)].astype(np.float64)
    col_to_row = kernels.lap_min(np.ascontiguousarray(-sub))
    return int(round(sub[col_to_row, np.arange(cols.size)].sum()))


def hungarian_match(confusion: np.ndarray) -> np.ndarray:
    """Permutation h maximizing sum_k confusion[h(k), k].

    confusion[c, k] counts rows with ground-truth class c and predicted
    cluster k. Among equally good permutations the lexicographically smallest
    (h(0), h(1), ...) wins, matching a first-found exhaustive search.
    """
    confusion = np.asarray(confusion)
    if confusion.ndim != 2 or confusion.shape[0] != confusion.shape[1]:
        raise DimensionError(f"confusion matrix must be square, got {confusion.shape}")
    if confusion.size and confusion.min() < 0:
        raise EvalError("confusion matrix entries must be nonnegative counts")
    k = confusion.shape[0]
    all_idx = np.arange(k)
    best = _assignment_value(confusion, all_idx, all_idx)

    # Fix h(0), h(1), ... greedily: the smallest class that still allows an
    # optimal completion of the remaining columns.
    h = np.empty(k, dtype=np.int64)
    avail = list(range(k))
    mass = 0
    for col in range(k):
        rest_cols = all_idx[col + 1:]
        for c in avail:
            rest_rows = np.array([r for r in avail if r != c], dtype=np.int64)
            if mass + confusion[c, col] + _assignment_value(confusion, rest_rows, rest_cols) == best:
                h[col] = c
                mass += confusion[c, col]
                avail.remove(c)
                break
        else:
            raise EvalError("assignment refinement failed")  # unreachable
    return h


def confusion_matrix(pred: np.ndarray, gt: np.ndarray, num_classes: int) -> np.ndarray:
    conf = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(conf, (gt, pred), 1)
    return conf


def gcd_accuracy(pred: np.ndarray, gt: np.ndarray, num_old_classes: int,
                 num_classes: int | None = None):
    """(acc_all, acc_old, acc_new) under one shared optimal matching."""
    pred = np.asarray(pred, dtype=np.int64)
    gt = np.asarray(gt, dtype=np.int64)
    if pred.size == 0:
        raise EvalError("cannot evaluate accuracy of an empty prediction set")
    if pred.shape != gt.shape:
        raise DimensionError("pred and gt must have the same length")
    if num_classes is None:
        num_classes = int(max(pred.max(), gt.max())) + 1
    mapped = hungarian_match(confusion_matrix(pred, gt, num_classes))[pred]
    correct = mapped == gt
    old = gt < num_old_classes
    acc_all = float(correct.mean())
    acc_old = float(correct[old].mean()) if old.any() else float("nan")
    acc_new = float(correct[~old].mean()) if (~old).any() else float("nan")
    return acc_all, acc_old, acc_new


def error_breakdown(mapped_pred: np.ndarray, gt: np.ndarray,
                    num_old_classes: int) -> dict:
    """Misclassification taxonomy, each ratio over its ground-truth side.

    true_old:  old-class row predicted as a different old class
    false_new: old-class row predicted as a new class
    false_old: new-class row predicted as an old class
    true_new:  new-class row predicted as a different new class
    """
    mapped_pred = np.asarray(mapped_pred, dtype=np.int64)
    gt = np.asarray(gt, dtype=np.int64)
    if mapped_pred.size == 0:
        raise EvalError("cannot evaluate an empty prediction set")
    wrong = mapped_pred != gt
    gt_old = gt < num_old_classes
    pred_old = mapped_pred < num_old_classes
    n_old = int(gt_old.sum())
    n_new = int((~gt_old).sum())

    def ratio(mask, denom):
        return float(mask.sum() / denom) if denom > 0 else float("nan")

    return {
        "true_old": ratio(wrong & gt_old & pred_old, n_old),
        "false_new": ratio(wrong & gt_old & ~pred_old, n_old),
        "false_old": ratio(wrong & ~gt_old & pred_old, n_new),
        "true_new": ratio(wrong & ~gt_old & ~pred_old, n_new),
    }


def auroc(scores: np.ndarray, is_new: np.ndarray) -> float:
    """Rank-based Mann-Whitney AUROC; ties count half."""
    scores = np.ascontiguousarray(scores, dtype=np.float64)
    is_new = np.asarray(is_new, dtype=bool)
    n_new = int(is_new.sum())
    n_old = int((~is_new).sum())
    if n_new == 0 or n_old == 0:
        raise EvalError("AUROC needs at least one old and one new sample")
    ranks = kernels.average_ranks(scores)
    u = ranks[is_new].sum() - n_new * (n_new + 1) / 2.0
    return float(u / (n_new * n_old))


def utilization_split(weights: np.ndarray, ground_truth: np.ndarray,
                      num_old_classes: int):
    """Fraction of unlabelled decision events with nonzero weight, split by
    the rows' ground-truth side. Returns (old_ratio, new_ratio); a side with
    no events yields None."""
    used = np.asarray(weights) > 0
    old = np.asarray(ground_truth) < num_old_classes

    def ratio(mask):
        total = int(mask.sum())
        return float(used[mask].mean()) if total else None

    return ratio(old), ratio(~old)


def evaluate_predictions(pred: np.ndarray, gt: np.ndarray, scores: np.ndarray,
                         num_old_classes: int, num_classes: int) -> EvalReport:
    """Full report: one shared matching drives accuracy and the taxonomy."""
    if pred.size == 0:
        raise EvalError("cannot evaluate an empty prediction set")
    mapped = hungarian_match(confusion_matrix(pred, gt, num_classes))[pred]
    correct = mapped == gt
    old = gt < num_old_classes
    acc_all = float(correct.mean())
    acc_old = float(correct[old].mean()) if old.any() else float("nan")
    acc_new = float(correct[~old].mean()) if (~old).any() else float("nan")
    try:
        roc = auroc(scores, ~old)
    except EvalError:
        roc = None
    return EvalReport(
        acc_all=acc_all,
        acc_old=acc_old,
        acc_new=acc_new,
        auroc=roc,
        error_ratios=error_breakdown(mapped, gt, num_old_classes),
    )
