"""End-to-end run held in memory: synth -> train -> embed -> enroll -> calibrate -> recognize -> evaluate."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .calibration import CalibrationResult, ScoredSample, calibrate
from .config import RunConfig
from .data_io import EmbeddingRecord, SynthConfig, SyntheticDataset, generate_synthetic, stack
from .embedder import EmbedderModel, TrainResult, embed, init_model, train
from .evaluation import EndToEndReport, end_to_end_report
from .gallery import Gallery, enroll
from .numeric import pairwise_distances
from .recognizer import RecognitionResult, recognize_batch


def embed_records(model: EmbedderModel, records: Sequence[EmbeddingRecord]) -> list[EmbeddingRecord]:
    if not records:
        return []
    E = embed(model, stack(list(records)))
    return [EmbeddingRecord(r.id, r.label, e, r.novelty) for r, e in zip(records, E)]


def known_records(records: Sequence[EmbeddingRecord]) -> list[EmbeddingRecord]:
    """Records eligible for enrollment: novelty false or unset."""
    return [r for r in records if not r.novelty]


def excluding(records: Sequence[EmbeddingRecord], gallery: Gallery) -> list[EmbeddingRecord]:
    enrolled = set(gallery.ids)
    return [r for r in records if r.id not in enrolled]


@dataclass
class PipelineOutput:
    dataset: SyntheticDataset
    training: TrainResult
    dev_gallery: Gallery
    calibration: CalibrationResult
    dev_scores: list[ScoredSample]
    test_gallery: Gallery
    test_queries: list[EmbeddingRecord]
    results: list[RecognitionResult]
    report: EndToEndReport

    @property
    def threshold(self) -> float:
        return self.calibration.threshold


def run_pipeline(run: RunConfig, synth: SynthConfig, dataset: SyntheticDataset | None = None) -> PipelineOutput:
    ds = dataset if dataset is not None else generate_synthetic(synth)
    model = init_model(ds.train[0].vector.size, run.hidden, run.embed_dim, run.seed)
    trained = train(model, stack(ds.train), [r.label for r in ds.train], run.train_config())

    dev = embed_records(trained.model, ds.dev)
    test = embed_records(trained.model, ds.test)

    dev_gallery = enroll(known_records(dev), run.n_shots, run.seed)
    cal, scores = calibrate(dev_gallery, excluding(dev, dev_gallery), run.k, run.p_norm, run.bins)
    threshold = cal.threshold if run.threshold_override is None else run.threshold_override

    test_gallery = enroll(known_records(test), run.n_shots, run.seed)
    queries = excluding(test, test_gallery)
    results = recognize_batch(test_gallery, threshold, [r.vector for r in queries], run.k,
                              run.p_norm, run.vote_k, [r.id for r in queries])
    report = end_to_end_report([r.label for r in queries], [bool(r.novelty) for r in queries], results)
    return PipelineOutput(ds, trained, dev_gallery, cal, scores, test_gallery, queries, results, report)


def embedding_separation(E: np.ndarray, labels: Sequence[str], p: float = 2.0) -> tuple[float, float]:
    """Mean intra-class and mean inter-class pairwise distance."""
    D = pairwise_distances(E, E, p)
    lab = np.asarray(labels)
    same = lab[:, None] == lab[None, :]
    off = ~np.eye(len(lab), dtype=bool)
    return float(D[same & off].mean()), float(D[~same].mean())
