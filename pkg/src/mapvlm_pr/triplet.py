"""Triplet loss under the learned Mahalanobis metric, with hardest-sample mining."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptyList, ShapeMismatch
from .mapvlm import MetricModel


@dataclass(frozen=True)
class TripletBatch:
    query: np.ndarray
    positives: Sequence[np.ndarray]
    negatives: Sequence[np.ndarray]
    margin: float = 0.5

    def __post_init__(self):
        if len(self.positives) == 0 or len(self.negatives) == 0:
            raise EmptyList("a triplet batch needs at least one positive and one negative")
        if self.margin < 0:
            raise ValueError("margin must be non-negative")


def _distances(query, others, model: MetricModel) -> np.ndarray:
    q = np.asarray(query, dtype=np.float64)
    O = np.asarray(others, dtype=np.float64)
    if O.ndim != 2 or q.shape != (model.dim,) or O.shape[1] != model.dim:
        raise ShapeMismatch(f"expected vectors of dimension {model.dim}")
    return np.linalg.norm((O - q) @ model.transform_matrix, axis=1)


def loss_from_distances(pos_dist, neg_dist, margin: float, hinge: bool = False) -> float:
    """``margin + max(pos_dist) - min(neg_dist)``, clamped at 0 when ``hinge``."""
    if len(pos_dist) == 0 or len(neg_dist) == 0:
        raise EmptyList("need at least one positive and one negative distance")
    loss = margin + float(np.max(pos_dist)) - float(np.min(neg_dist))
    return max(0.0, loss) if hinge else loss


def triplet_loss(batch: TripletBatch, model: MetricModel, hinge: bool = False) -> float:
    """Hardest-positive / hardest-negative triplet loss.

    Without ``hinge`` the raw value is returned and may be negative.
    """
    return loss_from_distances(_distances(batch.query, batch.positives, model),
                               _distances(batch.query, batch.negatives, model),
                               batch.margin, hinge)


def mine_hardest(query, positives, negatives, model: MetricModel) -> tuple[int, int]:
    """Index of the farthest positive and of the closest negative (lowest index on ties)."""
    if len(positives) == 0 or len(negatives) == 0:
        raise EmptyList("positives and negatives must be non-empty")
    pd = _distances(query, positives, model)
    nd = _distances(query, negatives, model)
    return int(np.argmax(pd)), int(np.argmin(nd))
