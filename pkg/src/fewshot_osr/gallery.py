"""Few-shot gallery of Known classes and top-K distance queries."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .data_io import EmbeddingRecord, read_embeddings, read_json, write_embeddings, write_json
from .errors import DataError, DimensionError
from .numeric import DEFAULT_P, as_vector, check_p, make_rng, pairwise_distances

_STREAM_ENROLL = 31


@dataclass(frozen=True)
class Gallery:
    vectors: np.ndarray  # (n_entries, dim)
    labels: tuple[str, ...]
    ids: tuple[str, ...]
    n_shots: int
    seed: int = 0

    def __post_init__(self):
        if self.vectors.ndim != 2 or self.vectors.shape[0] == 0:
            raise DataError("gallery must hold at least one vector")
        if not (len(self.labels) == len(self.ids) == self.vectors.shape[0]):
            raise DataError("gallery vectors, labels and ids must align")

    def __len__(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def classes(self) -> list[str]:
        return list(dict.fromkeys(self.labels))


@dataclass(frozen=True)
class QueryNeighborhood:
    distances: tuple[float, ...]  # ascending
    labels: tuple[str, ...]
    indices: tuple[int, ...]  # gallery entry positions
    mean_distance: float

    @property
    def top_k(self) -> list[tuple[float, str]]:
        return list(zip(self.distances, self.labels))


def enroll(records: Sequence[EmbeddingRecord], n_shots: int = 5, seed: int = 0) -> Gallery:
    """Pick min(n_shots, available) vectors per class by seeded sampling without replacement."""
    if n_shots < 1:
        raise ValueError("n_shots must be >= 1")
    if not records:
        raise DataError("cannot enroll an empty set of embeddings")
    by_class: dict[str, list[int]] = {}
    for i, r in enumerate(records):
        by_class.setdefault(r.label, []).append(i)
    dims = {r.vector.size for r in records}
    if len(dims) != 1:
        raise DimensionError(f"enrollment vectors have mixed dims {sorted(dims)}")

    rng = make_rng(seed, _STREAM_ENROLL)
    chosen = []
    for label in sorted(by_class):
        pool = by_class[label]
        take = min(n_shots, len(pool))
        picks = rng.choice(len(pool), size=take, replace=False)
        chosen.extend(pool[j] for j in sorted(picks))
    vecs = np.stack([records[i].vector for i in chosen])
    return Gallery(vecs, tuple(records[i].label for i in chosen),
                   tuple(records[i].id for i in chosen), n_shots, seed)


def query(gallery: Gallery, v_test, k: int = 5, p: float = DEFAULT_P) -> QueryNeighborhood:
    """The k gallery entries closest to v_test (ties go to the lower entry index)."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    v = as_vector(v_test, "query")
    if v.size != gallery.dim:
        raise DimensionError(f"query dim {v.size} != gallery dim {gallery.dim}")
    if k > len(gallery):
        warnings.warn(f"k={k} exceeds gallery size {len(gallery)}; using {len(gallery)}",
                      stacklevel=2)
        k = len(gallery)
    d = pairwise_distances(v[None, :], gallery.vectors, check_p(p))[0]
    idx = np.argsort(d, kind="stable")[:k]
    dists = tuple(float(d[i]) for i in idx)
    return QueryNeighborhood(dists, tuple(gallery.labels[i] for i in idx),
                             tuple(int(i) for i in idx), sum(dists) / len(dists))


def save_gallery(gallery: Gallery, path, p: float = DEFAULT_P) -> Path:
    """Write entries as embedding JSONL plus a ``<stem>.manifest.json`` sidecar."""
    path = Path(path)
    write_embeddings(
        [EmbeddingRecord(i, l, v, False) for i, l, v in zip(gallery.ids, gallery.labels, gallery.vectors)],
        path,
    )
    manifest = path.with_suffix(".manifest.json")
    write_json(manifest, {"n_shots": gallery.n_shots, "seed": gallery.seed, "p": float(p),
                          "dim": gallery.dim, "size": len(gallery)})
    return manifest


def load_gallery(path) -> tuple[Gallery, dict]:
    path = Path(path)
    records = read_embeddings(path)
    if not records:
        raise DataError(f"{path}: gallery file is empty")
    meta = read_json(path.with_suffix(".manifest.json"))
    gallery = Gallery(np.stack([r.vector for r in records]), tuple(r.label for r in records),
                      tuple(r.id for r in records), int(meta["n_shots"]), int(meta["seed"]))
    if gallery.dim != meta["dim"]:
        raise DimensionError(f"{path}: vectors have dim {gallery.dim}, manifest says {meta['dim']}")
    return gallery, meta
