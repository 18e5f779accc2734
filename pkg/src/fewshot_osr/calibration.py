"""Known/Novel threshold calibration: ROC over mean top-K distances and the Youden optimum.

Novel is the positive class and the decision rule is ``score >= threshold -> Novel``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data_io import EmbeddingRecord
from .errors import DataError
from .gallery import Gallery, query
from .numeric import DEFAULT_P


@dataclass(frozen=True)
class ScoredSample:
    score: float
    is_novel: bool
    id: str = ""


@dataclass(frozen=True)
class RocPoint:
    threshold: float
    tpr: float
    fpr: float
    tp: int
    fp: int


@dataclass
class RocCurve:
    points: list[RocPoint]  # thresholds descending, so fpr/tpr non-decreasing
    auc: float
    n_pos: int
    n_neg: int


@dataclass
class Histogram:
    edges: list[float]
    counts: list[int]


@dataclass
class CalibrationResult:
    threshold: float
    youden_j: float
    tpr_at: float
    fpr_at: float
    roc: RocCurve | None = None
    known_hist: Histogram | None = None
    novel_hist: Histogram | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"threshold": self.threshold, "youden_j": self.youden_j, "tpr": self.tpr_at,
               "fpr": self.fpr_at}
        if self.roc is not None:
            out["auc"] = self.roc.auc
            out["roc"] = [{"threshold": q.threshold, "tpr": q.tpr, "fpr": q.fpr} for q in self.roc.points]
        if self.known_hist is not None:
            out["histograms"] = {"edges": self.known_hist.edges, "known": self.known_hist.counts,
                                 "novel": self.novel_hist.counts}
        out.update(self.extra)
        return out


def score_dev_set(gallery: Gallery, dev: Sequence[EmbeddingRecord], k: int = 5,
                  p: float = DEFAULT_P) -> list[ScoredSample]:
    """Mean top-K gallery distance for each development record."""
    if not dev:
        raise DataError("development set is empty")
    flags = [r.novelty for r in dev]
    if any(f is None for f in flags):
        raise DataError("every development record needs a novelty flag")
    if all(flags) or not any(flags):
        raise DataError("development set must contain both Known and Novel samples to calibrate")
    return [ScoredSample(query(gallery, r.vector, k, p).mean_distance, bool(r.novelty), r.id)
            for r in dev]


def candidate_thresholds(scores: Sequence[float]) -> list[float]:
    """One threshold above the max, midpoints between distinct scores, one below the min (descending)."""
    u = np.unique(np.asarray(scores, dtype=np.float64))
    mids = []
    for lo, hi in zip(u[:-1], u[1:]):
        m = lo + (hi - lo) / 2.0
        if not lo < m <= hi:  # adjacent doubles: the midpoint can round onto lo
            m = hi
        mids.append(float(m))
    return [float(u[-1]) + 1.0, *reversed(mids), float(u[0]) - 1.0]


def roc_curve(samples: Sequence[ScoredSample]) -> RocCurve:
    scores = np.array([s.score for s in samples], dtype=np.float64)
    novel = np.array([s.is_novel for s in samples], dtype=bool)
    n_pos = int(novel.sum())
    n_neg = int(len(novel) - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise DataError("ROC needs both Known and Novel samples")
    if not np.all(np.isfinite(scores)):
        raise DataError("scores must be finite")

    pos_sorted = np.sort(scores[novel])
    neg_sorted = np.sort(scores[~novel])
    points = []
    for thr in candidate_thresholds(scores):
        # count of scores >= thr
        tp = n_pos - int(np.searchsorted(pos_sorted, thr, side="left"))
        fp = n_neg - int(np.searchsorted(neg_sorted, thr, side="left"))
        points.append(RocPoint(thr, tp / n_pos, fp / n_neg, tp, fp))
    # trapezoids on integer counts so perfect separation gives exactly 1.0
    area2 = sum((b.fp - a.fp) * (a.tp + b.tp) for a, b in zip(points[:-1], points[1:]))
    return RocCurve(points, area2 / (2 * n_pos * n_neg), n_pos, n_neg)


def youden_threshold(roc: RocCurve) -> CalibrationResult:
    """Maximise J = TPR - FPR; ties prefer lower FPR, then lower threshold."""
    if len(roc.points) < 2:
        raise DataError("degenerate ROC curve")
    best = min(roc.points, key=lambda q: (-(q.tpr - q.fpr), q.fpr, q.threshold))
    return CalibrationResult(best.threshold, best.tpr - best.fpr, best.tpr, best.fpr, roc)


def export_histograms(samples: Sequence[ScoredSample], bins: int = 50) -> tuple[Histogram, Histogram]:
    """Known and Novel score histograms on shared edges spanning [min, max]."""
    if bins < 1:
        raise ValueError("bins must be >= 1")
    scores = np.array([s.score for s in samples], dtype=np.float64)
    novel = np.array([s.is_novel for s in samples], dtype=bool)
    if scores.size == 0:
        edges = np.linspace(0.0, 1.0, bins + 1)
    else:
        lo, hi = float(scores.min()), float(scores.max())
        if lo == hi:
            lo, hi = lo - 0.5, hi + 0.5
        edges = np.linspace(lo, hi, bins + 1)
    known_counts, _ = np.histogram(scores[~novel], bins=edges)
    novel_counts, _ = np.histogram(scores[novel], bins=edges)
    e = edges.tolist()
    return Histogram(e, known_counts.tolist()), Histogram(e, novel_counts.tolist())


def calibrate(gallery: Gallery, dev: Sequence[EmbeddingRecord], k: int = 5, p: float = DEFAULT_P,
              bins: int = 50) -> tuple[CalibrationResult, list[ScoredSample]]:
    samples = score_dev_set(gallery, dev, k, p)
    result = youden_threshold(roc_curve(samples))
    result.known_hist, result.novel_hist = export_histograms(samples, bins)
    return result, samples
