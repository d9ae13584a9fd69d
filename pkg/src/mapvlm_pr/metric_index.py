"""Mahalanobis distances and exhaustive k-NN retrieval in the learned metric.

Since ``M = T T^T`` with ``T = W1 W2``, the distance between ``a`` and ``b`` is
``||T^T a - T^T b||``; the database is transformed once at build time and
queries are scanned in the d2-dimensional space.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .descriptors import DescriptorSet
from .errors import ShapeMismatch
from .mapvlm import MetricModel


def mahalanobis_distance(f_i, f_j, model: MetricModel) -> float:
    f_i = np.asarray(f_i, dtype=np.float64)
    f_j = np.asarray(f_j, dtype=np.float64)
    if f_i.shape != (model.dim,) or f_j.shape != (model.dim,):
        raise ShapeMismatch(f"expected two vectors of dimension {model.dim}")
    return float(np.linalg.norm((f_i - f_j) @ model.transform_matrix))


@dataclass(frozen=True)
class MetricIndex:
    transformed: np.ndarray
    frame_ids: np.ndarray
    positions: np.ndarray
    model: MetricModel

    def __len__(self):
        return self.transformed.shape[0]


def build_index(dset: DescriptorSet, model: MetricModel) -> MetricIndex:
    if len(dset) and dset.dim != model.dim:
        raise ShapeMismatch(f"descriptors have D={dset.dim}, model expects D={model.dim}")
    if len(dset):
        transformed = model.transform(dset.vectors)
    else:
        transformed = np.zeros((0, model.d2))
    transformed.setflags(write=False)
    return MetricIndex(transformed, dset.frame_ids.astype(np.int64), dset.positions, model)


def query_knn(index: MetricIndex, query, k: int,
              exclude_ids: Optional[Iterable[int]] = None) -> list[tuple[int, float]]:
    """``min(k, N)`` nearest database entries as ``(frame_id, distance)``.

    Sorted by distance, ties by ascending frame id. ``exclude_ids`` removes
    candidates before ranking (used for temporal exclusion windows).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not len(index):
        return []
    q = index.model.transform(np.asarray(query, dtype=np.float64).reshape(1, -1))[0]
    diff = index.transformed - q
    dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    ids = index.frame_ids
    if exclude_ids is not None:
        keep = ~np.isin(ids, np.fromiter(exclude_ids, dtype=np.int64))
        dist, ids = dist[keep], ids[keep]
    order = np.lexsort((ids, dist))[:k]
    return [(int(ids[i]), float(dist[i])) for i in order]
