"""Losses for the discovery classifier.

Three pieces: two-view self-distillation over all rows with a batch-mean
entropy regularizer, supervised cross-entropy on the labelled rows, and a
contrastive representation loss (cross-view instance alignment plus a
supervised contrastive term on labelled rows).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from gcdlib import compute as C
from gcdlib import kernels


@dataclass
class GcdStepOutput:
    """Per-view student/teacher predictions and the assembled loss terms."""

    student_probs: tuple          # tape tensors, one per view
    teacher_probs: tuple          # plain arrays, gradient-blocked
    l_cls_u: C.Tensor
    l_cls_s: C.Tensor
    l_rep: C.Tensor
    l_gcd: C.Tensor
    flags: list = field(default_factory=list)


def gcd_forward(h: C.Tensor, prototypes: C.Tensor, temp: float) -> C.Tensor:
    """Student probabilities: softmax of cosine logits against unit prototypes."""
    logits = C.matmul(h, C.l2_normalize(prototypes), transpose_b=True)
    return C.softmax_t(logits, temp)


def teacher_probs(h_data: np.ndarray, prototypes_data: np.ndarray, temp: float) -> np.ndarray:
    """Sharpened predictions of the other view; computed off-tape so no
    gradient ever flows through the teacher."""
    protos, _ = kernels.l2norm_rows(prototypes_data)
    return kernels.softmax_rows((h_data @ protos.T) / temp)


def _cross_entropy_mean(target: np.ndarray, probs: C.Tensor) -> C.Tensor:
    """Mean over rows of -sum_j target_j * log(probs_j)."""
    picked = C.mul_const(C.log_clamped(probs), -target)
    return C.scale(C.sum_all(picked), 1.0 / probs.rows)


def cls_unsup_loss(student: tuple[C.Tensor, C.Tensor],
                   teacher: tuple[np.ndarray, np.ndarray],
                   mean_entropy_weight: float,
                   symmetric: bool = True) -> C.Tensor:
    """Self-distillation loss minus the weighted entropy of the batch-mean
    prediction (the mean is taken over both views' student outputs)."""
    p1, p2 = student
    q1, q2 = teacher
    if symmetric:
        ce = C.scale(C.add(_cross_entropy_mean(q2, p1), _cross_entropy_mean(q1, p2)), 0.5)
    else:
        ce = _cross_entropy_mean(q2, p1)
    p_bar = C.scale(C.add(C.mean_rows(p1), C.mean_rows(p2)), 0.5)
    entropy = C.neg(C.sum_all(C.mul(p_bar, C.log_clamped(p_bar))))
    return C.sub(ce, C.scale(entropy, mean_entropy_weight))


def cls_sup_loss(student_labelled: tuple[C.Tensor, C.Tensor],
                 labels: np.ndarray, num_classes: int):
    """Mean cross-entropy to one-hot ground truth, averaged over both views.

    Returns (loss, empty_flag); an empty labelled batch yields loss 0.
    """
    if labels.size == 0:
        return C.constant(0.0), True
    onehot = np.zeros((labels.size, num_classes))
    onehot[np.arange(labels.size), labels] = 1.0
    terms = [_cross_entropy_mean(onehot, p) for p in student_labelled]
    return C.scale(C.add(terms[0], terms[1]), 0.5), False


def _alignment_direction(z_a: C.Tensor, z_b: C.Tensor, temp: float) -> C.Tensor:
    """Cross-view instance alignment: row i of z_a must pick row i of z_b
    among all rows of z_b."""
    logp = C.log_softmax_t(C.matmul(z_a, z_b, transpose_b=True), temp)
    eye = np.eye(z_a.rows)
    return C.scale(C.sum_all(C.mul_const(logp, -eye)), 1.0 / z_a.rows)


def _supcon_one_view(z_lab: C.Tensor, labels: np.ndarray, temp: float) -> C.Tensor:
    """Supervised contrastive term within one view's labelled rows.

    Anchors with no same-label peer contribute 0 but stay in the mean's
    denominator.
    """
    n = z_lab.rows
    same = labels[:, None] == labels[None, :]
    pos_mask = same & ~np.eye(n, dtype=bool)
    counts = pos_mask.sum(axis=1)

    self_block = np.where(np.eye(n, dtype=bool), -1e30, 0.0)
    logits = C.add_const(C.matmul(z_lab, z_lab, transpose_b=True), self_block * temp)
    logp = C.log_softmax_t(logits, temp)
    pos_logp = C.sum_cols(C.mul_const(logp, pos_mask.astype(np.float64)))
    inv_counts = np.where(counts > 0, -1.0 / np.maximum(counts, 1), 0.0)
    return C.scale(C.sum_all(C.mul_const(pos_logp, inv_counts.reshape(-1, 1))), 1.0 / n)


def rep_loss(z1: C.Tensor, z2: C.Tensor, labelled_mask: np.ndarray,
             labels: np.ndarray, temp_unsup: float, temp_sup: float,
             balance: float) -> C.Tensor:
    """(1 - balance) * cross-view alignment + balance * supervised contrastive."""
    unsup = C.scale(
        C.add(_alignment_direction(z1, z2, temp_unsup),
              _alignment_direction(z2, z1, temp_unsup)),
        0.5,
    )
    lab_idx = np.flatnonzero(labelled_mask)
    if lab_idx.size >= 2:
        lab = labels[lab_idx]
        sup = C.scale(
            C.add(_supcon_one_view(C.gather_rows(z1, lab_idx), lab, temp_sup),
                  _supcon_one_view(C.gather_rows(z2, lab_idx), lab, temp_sup)),
            0.5,
        )
    else:
        sup = C.constant(0.0)
    return C.add(C.scale(unsup, 1.0 - balance), C.scale(sup, balance))


def gcd_loss(l_cls_u: C.Tensor, l_cls_s: C.Tensor, l_rep: C.Tensor,
             balance: float) -> C.Tensor:
    """(1 - balance) * unsupervised + balance * supervised classification, plus
    the representation loss."""
    cls = C.add(C.scale(l_cls_u, 1.0 - balance), C.scale(l_cls_s, balance))
    return C.add(cls, l_rep)
