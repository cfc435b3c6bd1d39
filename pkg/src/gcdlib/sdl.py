"""Semantic distribution learning: a bank of one-vs-all binary classifiers in
its own normalized projection space.

Each known class k owns a positive and a negative unit weight row; the
two-way softmax over their scaled similarities is evaluated as a sigmoid of
the score difference, which keeps o_plus + o_minus = 1 exact. The negative
probability of the top-scoring classifier is the distribution-shift score:
near 0 for rows that look like a known class, near 1 for novel-looking rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gcdlib import compute as C
from gcdlib.errors import ConfigError


@dataclass
class OvaOutput:
    """Per-classifier positive/negative probabilities for a batch of rows."""

    o_plus: C.Tensor   # (b, M)
    o_minus: C.Tensor  # (b, M)

    @property
    def num_rows(self) -> int:
        return self.o_plus.rows

    @property
    def num_classifiers(self) -> int:
        return self.o_plus.cols


def sdl_forward(f: C.Tensor, pos_weights: C.Tensor, neg_weights: C.Tensor,
                temp: float) -> OvaOutput:
    """Two-way softmax per classifier over (w+ . f / temp, w- . f / temp)."""
    if temp <= 0:
        raise ConfigError(f"ova temperature must be positive, got {temp}")
    pos = C.matmul(f, C.l2_normalize(pos_weights), transpose_b=True)
    neg = C.matmul(f, C.l2_normalize(neg_weights), transpose_b=True)
    delta = C.scale(C.sub(pos, neg), 1.0 / temp)
    return OvaOutput(o_plus=C.sigmoid(delta), o_minus=C.sigmoid(C.neg(delta)))


def hardest_negatives(o_plus: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Index of the non-ground-truth classifier with the largest positive
    probability, per row."""
    masked = o_plus.copy()
    masked[np.arange(o_plus.shape[0]), labels] = -np.inf
    return masked.argmax(axis=1)


def sdl_sup_loss(ova: OvaOutput, labels: np.ndarray,
                 hardest: np.ndarray | None = None) -> C.Tensor:
    """Positive-class log loss plus the hardest negative classifier's log loss.

    The hardest-negative index is selected off-tape (and may be passed in
    frozen, e.g. by the gradient checker).
    """
    b, m = ova.o_plus.shape
    if m < 2:
        raise ConfigError("hard-negative sampling needs at least 2 known classes")
    if hardest is None:
        hardest = hardest_negatives(ova.o_plus.data, labels)

    pos_mask = np.zeros((b, m))
    pos_mask[np.arange(b), labels] = 1.0
    neg_mask = np.zeros((b, m))
    neg_mask[np.arange(b), hardest] = 1.0

    total = C.add(C.mul_const(C.log_clamped(ova.o_plus), -pos_mask),
                  C.mul_const(C.log_clamped(ova.o_minus), -neg_mask))
    return C.scale(C.sum_all(total), 1.0 / b)


def sdl_unsup_loss(ova: OvaOutput) -> C.Tensor:
    """Mean over rows of the summed binary entropies; minimizing it pushes
    every classifier's output towards 0 or 1."""
    ent_pos = C.mul(ova.o_plus, C.log_clamped(ova.o_plus))
    ent_neg = C.mul(ova.o_minus, C.log_clamped(ova.o_minus))
    return C.scale(C.sum_all(C.add(ent_pos, ent_neg)), -1.0 / ova.num_rows)


def ood_score(ova: OvaOutput) -> np.ndarray:
    """Negative probability of the top positive classifier (ties: lowest index)."""
    top = ova.o_plus.data.argmax(axis=1)
    return ova.o_minus.data[np.arange(ova.num_rows), top]


def certainty(scores: np.ndarray) -> np.ndarray:
    """|2s - 1|: zero at the ambiguous point s = 0.5, one at either extreme."""
    return np.abs(2.0 * scores - 1.0)
