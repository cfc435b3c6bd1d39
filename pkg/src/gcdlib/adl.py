"""Auxiliary debiased classifier losses.

The debiased head trains only on one-hot hard targets: ground-truth labels on
labelled rows and filtered pseudo-labels on unlabelled rows. A pseudo-label
survives when the discovery classifier is confident (max probability strictly
above the threshold), its old/new verdict agrees with the detector, and it is
weighted by the detector's certainty, which turns the unlabelled loss into a
curriculum. The pseudo-label machinery (predicted class, score, certainty) is
read off-tape, so no gradient flows back through it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gcdlib import compute as C
from gcdlib.sdl import certainty


def adl_forward(h: C.Tensor, prototypes: C.Tensor, temp: float) -> C.Tensor:
    """Debiased-head probabilities: softmax of cosine logits against unit
    prototypes, sharing the clustering space h with the discovery head."""
    logits = C.matmul(h, C.l2_normalize(prototypes), transpose_b=True)
    return C.softmax_t(logits, temp)


@dataclass
class DebiasDecision:
    """Per-row pseudo-label gate for one view's unlabelled rows."""

    pseudo_labels: np.ndarray   # (b,) argmax of the discovery classifier
    pass_threshold: np.ndarray  # (b,) bool, max prob strictly above threshold
    consistent: np.ndarray      # (b,) bool task-consistency gate (all-true when unguided)
    certainty: np.ndarray       # (b,) detector certainty (all-one when unguided)
    weight: np.ndarray          # (b,) product of the three factors


def task_consistency(pseudo_labels: np.ndarray, scores: np.ndarray,
                     num_old_classes: int) -> np.ndarray:
    """1 iff the classifier's old/new verdict agrees with the detector's.

    Classes below num_old_classes are the known ones; both comparisons against
    0.5 are strict, so a maximally ambiguous score fails the gate either way.
    """
    new_side = (pseudo_labels >= num_old_classes) & (scores > 0.5)
    old_side = (pseudo_labels < num_old_classes) & (scores < 0.5)
    return new_side | old_side


def debias_weights(gcd_probs: np.ndarray, scores: np.ndarray | None,
                   threshold: float, num_old_classes: int,
                   use_guidance: bool = True) -> DebiasDecision:
    """Gate and weight each row's pseudo-label.

    With guidance the weight is 1(max p > threshold) * consistency * certainty;
    without it (threshold-only ablation) the gate alone decides and scores are
    not consulted.
    """
    b = gcd_probs.shape[0]
    pseudo = gcd_probs.argmax(axis=1)
    passing = gcd_probs.max(axis=1) > threshold
    if use_guidance:
        cons = task_consistency(pseudo, scores, num_old_classes)
        cert = certainty(scores)
    else:
        cons = np.ones(b, dtype=bool)
        cert = np.ones(b)
    return DebiasDecision(
        pseudo_labels=pseudo,
        pass_threshold=passing,
        consistent=cons,
        certainty=cert,
        weight=passing.astype(np.float64) * cons.astype(np.float64) * cert,
    )


def adl_unsup_loss(adl_probs: C.Tensor, decision: DebiasDecision,
                   num_unlabelled: int) -> C.Tensor:
    """Weighted hard-label cross-entropy over the full unlabelled batch size.

    The denominator stays the unlabelled batch size rather than the surviving
    count, so a sparse curriculum contributes proportionally little.
    """
    b, k = adl_probs.shape
    target = np.zeros((b, k))
    target[np.arange(b), decision.pseudo_labels] = 1.0
    weighted = -target * decision.weight[:, None]
    picked = C.mul_const(C.log_clamped(adl_probs), weighted)
    return C.scale(C.sum_all(picked), 1.0 / num_unlabelled)


def adl_sup_loss(adl_probs: C.Tensor, labels: np.ndarray, num_classes: int):
    """Mean cross-entropy to ground truth; empty labelled batch yields 0."""
    if labels.size == 0:
        return C.constant(0.0), True
    onehot = np.zeros((labels.size, num_classes))
    onehot[np.arange(labels.size), labels] = 1.0
    picked = C.mul_const(C.log_clamped(adl_probs), -onehot)
    return C.scale(C.sum_all(picked), 1.0 / labels.size), False


def adl_loss(l_sup: C.Tensor, l_unsup: C.Tensor) -> C.Tensor:
    return C.add(l_sup, l_unsup)
