"""Ground truth from positions and retrieval metrics (AR@N, PR curve, AUC,
F1max, Recall@1%)."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import EmptyCurve

AR_NS = (1, 5, 20)


@dataclass(frozen=True)
class GroundTruth:
    """``positives[i]`` holds the database frame ids that count as matches for query i."""

    positives: Sequence[frozenset]
    gt_radius: float
    exclusion_frames: int = 0

    @property
    def evaluable(self) -> np.ndarray:
        return np.array([bool(p) for p in self.positives], dtype=bool)

    @property
    def n_evaluable(self) -> int:
        return int(self.evaluable.sum())


@dataclass
class EvalReport:
    ar_at: dict
    auc: float
    f1max: float
    recall_at_1: float
    recall_at_1pct: float
    pr_curve: list = field(default_factory=list)
    n_queries: int = 0
    n_evaluable: int = 0

    def as_lines(self) -> list[str]:
        items = [(f"ar@{n}", v) for n, v in sorted(self.ar_at.items())]
        items += [("auc", self.auc), ("f1max", self.f1max),
                  ("recall@1", self.recall_at_1), ("recall@1%", self.recall_at_1pct)]
        lines = [f"{k}={v:.6f}" for k, v in items]
        lines += [f"n_queries={self.n_queries}", f"n_evaluable={self.n_evaluable}"]
        return lines

    def write(self, path) -> None:
        Path(path).write_text("\n".join(self.as_lines()) + "\n", encoding="utf-8")

    def write_pr_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["precision", "recall"])
            writer.writerows((f"{p:.6f}", f"{r:.6f}") for p, r in self.pr_curve)


def read_report(path) -> dict[str, float]:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if "=" in line:
            key, val = line.split("=", 1)
            out[key.strip()] = float(val)
    return out


def build_ground_truth(query_positions, db_positions, gt_radius: float,
                       exclusion_frames: int = 0, query_frames=None, db_frames=None,
                       same_sequence: bool = False) -> GroundTruth:
    """Positives are database entries within ``gt_radius`` in the xy plane.

    With ``same_sequence`` set, entries whose frame id lies within
    ``exclusion_frames`` of the query's (including the query itself) are
    never positives.
    """
    if gt_radius <= 0:
        raise ValueError("gt_radius must be positive")
    qp = np.asarray(query_positions, dtype=np.float64).reshape(-1, 3)[:, :2]
    dp = np.asarray(db_positions, dtype=np.float64).reshape(-1, 3)[:, :2]
    qf = np.arange(len(qp)) if query_frames is None else np.asarray(query_frames, dtype=np.int64)
    df = np.arange(len(dp)) if db_frames is None else np.asarray(db_frames, dtype=np.int64)
    positives = []
    for i in range(len(qp)):
        ok = np.hypot(*(dp - qp[i]).T) <= gt_radius if len(dp) else np.zeros(0, bool)
        if same_sequence:
            ok &= np.abs(df - qf[i]) > exclusion_frames
        positives.append(frozenset(int(j) for j in df[ok]))
    return GroundTruth(positives, gt_radius, exclusion_frames)


def recall_at_n(results: Sequence[Sequence[int]], gt: GroundTruth, n: int) -> float:
    """Fraction of evaluable queries with a positive among their first ``n`` results."""
    if n < 1:
        raise ValueError("N must be >= 1")
    hits = total = 0
    for ranked, pos in zip(results, gt.positives):
        if not pos:
            continue
        total += 1
        hits += any(fid in pos for fid in list(ranked)[:n])
    return hits / total if total else 0.0


def precision_recall_curve(top1, gt: GroundTruth) -> list[tuple[float, float]]:
    """Sweep a threshold over top-1 distances.

    ``top1[i]`` is ``(frame_id, distance)`` or ``None`` for a query without
    results. Points are ``(precision, recall)`` in order of increasing threshold.
    """
    dist, correct = [], []
    for t, pos in zip(top1, gt.positives):
        if t is None:
            continue
        dist.append(t[1])
        correct.append(t[0] in pos)
    if not dist:
        return []
    dist, correct = np.array(dist), np.array(correct)
    n_pos = gt.n_evaluable
    curve = []
    for tau in np.unique(dist):
        accepted = dist <= tau
        tp = int(np.sum(correct & accepted))
        precision = tp / int(accepted.sum())
        recall = tp / n_pos if n_pos else 0.0
        curve.append((precision, recall))
    return curve


def auc(pr_curve) -> float:
    """Trapezoidal area under precision(recall), extended to recall 0."""
    if not pr_curve:
        raise EmptyCurve("precision-recall curve is empty")
    prec = [pr_curve[0][0]] + [p for p, _ in pr_curve]
    rec = [0.0] + [r for _, r in pr_curve]
    area = 0.0
    for i in range(1, len(rec)):
        area += (rec[i] - rec[i - 1]) * (prec[i] + prec[i - 1]) / 2
    return area


def f1max(pr_curve) -> float:
    if not pr_curve:
        raise EmptyCurve("precision-recall curve is empty")
    return max((2 * p * r / (p + r) if p + r > 0 else 0.0) for p, r in pr_curve)


def one_percent_n(db_size: int) -> int:
    if db_size < 1:
        raise ValueError("db_size must be >= 1")
    return max(1, math.ceil(db_size / 100))


def recall_at_1pct(results, gt: GroundTruth, db_size: int) -> float:
    return recall_at_n(results, gt, one_percent_n(db_size))


def evaluate(ranked: Sequence[Sequence[tuple[int, float]]], gt: GroundTruth,
             db_size: int) -> EvalReport:
    """Full report from per-query ranked ``(frame_id, distance)`` lists."""
    ids = [[fid for fid, _ in r] for r in ranked]
    top1 = [r[0] if r else None for r in ranked]
    curve = precision_recall_curve(top1, gt)
    ar = {n: recall_at_n(ids, gt, n) for n in AR_NS}
    return EvalReport(
        ar_at=ar,
        auc=auc(curve) if curve else 0.0,
        f1max=f1max(curve) if curve else 0.0,
        recall_at_1=ar[1],
        recall_at_1pct=recall_at_1pct(ids, gt, db_size) if db_size else 0.0,
        pr_curve=curve,
        n_queries=len(ranked),
        n_evaluable=gt.n_evaluable,
    )
