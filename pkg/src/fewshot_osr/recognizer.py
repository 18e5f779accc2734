"""Open-set recognition: threshold the mean top-K distance, then KNN-vote the Known ones."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .errors import DataError
from .gallery import Gallery, QueryNeighborhood, query
from .numeric import DEFAULT_P

NOVEL = "Novel"


@dataclass(frozen=True)
class RecognitionResult:
    is_novel: bool
    label: str | None  # winning class when Known
    mean_distance: float
    votes: dict[str, int] | None
    neighborhood: QueryNeighborhood
    id: str = ""

    @property
    def verdict(self) -> str:
        return NOVEL if self.is_novel else "Known"

    @property
    def predicted(self) -> str:
        return NOVEL if self.is_novel else self.label

    def to_dict(self) -> dict:
        out = {"id": self.id, "verdict": self.verdict}
        if not self.is_novel:
            out["label"] = self.label
        out["mean_distance"] = self.mean_distance
        if self.votes is not None:
            out["votes"] = dict(self.votes)
        return out


def knn_vote(labels: Sequence[str], distances: Sequence[float]) -> tuple[str, dict[str, int]]:
    """Most frequent label; ties go to the smaller mean neighbor distance, then label order."""
    counts = Counter(labels)
    sums: dict[str, float] = {}
    for lab, d in zip(labels, distances):
        sums[lab] = sums.get(lab, 0.0) + d
    winner = min(counts, key=lambda lab: (-counts[lab], sums[lab] / counts[lab], lab))
    return winner, {lab: counts[lab] for lab in sorted(counts)}


def recognize(gallery: Gallery, threshold: float, v_test, k: int = 5, p: float = DEFAULT_P,
              vote_k: int | None = None, id: str = "") -> RecognitionResult:
    if threshold != threshold:
        raise DataError("threshold must not be NaN")
    vote_k = k if vote_k is None else vote_k
    hood = query(gallery, v_test, max(k, vote_k), p)
    if vote_k != k:
        m = min(k, len(hood.distances))
        mean = sum(hood.distances[:m]) / m
    else:
        mean = hood.mean_distance
    if mean >= threshold:
        return RecognitionResult(True, None, mean, None, hood, id)
    n = min(vote_k, len(hood.labels))
    winner, votes = knn_vote(hood.labels[:n], hood.distances[:n])
    return RecognitionResult(False, winner, mean, votes, hood, id)


def recognize_batch(gallery: Gallery, threshold: float, queries: Sequence, k: int = 5,
                    p: float = DEFAULT_P, vote_k: int | None = None,
                    ids: Sequence[str] | None = None) -> list[RecognitionResult]:
    """recognize() over each query in order; the first failure is re-raised with its index."""
    out = []
    for i, q in enumerate(queries):
        try:
            out.append(recognize(gallery, threshold, q, k, p, vote_k, ids[i] if ids else ""))
        except (ValueError, FloatingPointError) as e:
            raise type(e)(f"query {i}: {e}") from e
    return out
