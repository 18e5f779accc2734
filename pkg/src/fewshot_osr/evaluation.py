"""Confusion matrices and weighted F1 for bipartitioning and type classification."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError
from .recognizer import NOVEL, RecognitionResult

KNOWN = "Known"


@dataclass
class ConfusionMatrix:
    labels: list[str]
    counts: np.ndarray  # rows actual, columns predicted

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_rows(self) -> list[list]:
        rows = [["actual\\predicted", *self.labels]]
        for lab, row in zip(self.labels, self.counts):
            rows.append([lab, *map(int, row)])
        return rows


@dataclass
class F1Report:
    labels: list[str]
    precision: dict[str, float]
    recall: dict[str, float]
    per_class_f1: dict[str, float]
    support: dict[str, int]
    weighted_f1: float

    def to_rows(self) -> list[list]:
        rows = [["label", "precision", "recall", "f1", "support"]]
        for lab in self.labels:
            rows.append([lab, self.precision[lab], self.recall[lab], self.per_class_f1[lab],
                         self.support[lab]])
        return rows


def confusion_matrix(actual: Sequence[str], predicted: Sequence[str],
                     labels: Sequence[str] | None = None) -> ConfusionMatrix:
    if len(actual) != len(predicted):
        raise DataError(f"length mismatch: {len(actual)} actual vs {len(predicted)} predicted")
    if not actual:
        raise DataError("nothing to evaluate")
    if labels is None:
        labels = sorted(set(actual) | set(predicted))
    pos = {lab: i for i, lab in enumerate(labels)}
    counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for a, p in zip(actual, predicted):
        counts[pos[a], pos[p]] += 1
    return ConfusionMatrix(list(labels), counts)


def f1_from_confusion(cm: ConfusionMatrix) -> F1Report:
    """Per-class precision/recall/F1 (0 where undefined) and support-weighted F1."""
    tp = np.diag(cm.counts)
    pred_tot = cm.counts.sum(axis=0)
    act_tot = cm.counts.sum(axis=1)
    prec, rec, f1, sup = {}, {}, {}, {}
    for i, lab in enumerate(cm.labels):
        p = tp[i] / pred_tot[i] if pred_tot[i] else 0.0
        r = tp[i] / act_tot[i] if act_tot[i] else 0.0
        prec[lab], rec[lab] = float(p), float(r)
        f1[lab] = float(2 * p * r / (p + r)) if p + r > 0 else 0.0
        sup[lab] = int(act_tot[i])
    total = sum(sup.values())
    weighted = sum(sup[lab] * f1[lab] for lab in cm.labels) / total if total else 0.0
    return F1Report(list(cm.labels), prec, rec, f1, sup, float(weighted))


def classification_report(actual: Sequence[str], predicted: Sequence[str],
                          labels: Sequence[str] | None = None) -> tuple[ConfusionMatrix, F1Report]:
    cm = confusion_matrix([str(a) for a in actual], [str(p) for p in predicted], labels)
    return cm, f1_from_confusion(cm)


@dataclass
class BipartitionReport:
    confusion: ConfusionMatrix
    f1: F1Report
    novel_f1: float  # binary F1 with Novel as the positive class
    tpr: float
    fpr: float


def bipartition_report(actual_novel: Sequence[bool], predicted_novel: Sequence[bool]) -> BipartitionReport:
    if len(actual_novel) != len(predicted_novel):
        raise DataError(f"length mismatch: {len(actual_novel)} vs {len(predicted_novel)}")
    a = [NOVEL if x else KNOWN for x in actual_novel]
    p = [NOVEL if x else KNOWN for x in predicted_novel]
    cm, rep = classification_report(a, p, [KNOWN, NOVEL])
    (tn, fp), (fn, tp) = cm.counts.tolist()
    return BipartitionReport(cm, rep, rep.per_class_f1[NOVEL],
                             tp / (tp + fn) if tp + fn else 0.0, fp / (fp + tn) if fp + tn else 0.0)


@dataclass
class EndToEndReport:
    bipartition: BipartitionReport
    known_types: tuple[ConfusionMatrix, F1Report]  # Known-support samples only
    all_classes: tuple[ConfusionMatrix, F1Report]  # Known classes plus the Novel pseudo-class

    def summary(self) -> dict:
        return {
            "bipartition_weighted_f1": self.bipartition.f1.weighted_f1,
            "bipartition_novel_f1": self.bipartition.novel_f1,
            "bipartition_tpr": self.bipartition.tpr,
            "bipartition_fpr": self.bipartition.fpr,
            "known_types_weighted_f1": self.known_types[1].weighted_f1,
            "all_classes_weighted_f1": self.all_classes[1].weighted_f1,
            "n_samples": self.bipartition.confusion.total,
        }


def end_to_end_report(actual_labels: Sequence[str], actual_novel: Sequence[bool],
                      results: Sequence[RecognitionResult]) -> EndToEndReport:
    """Both views of a recognition run.

    In the class view a Novel sample's true label is the pseudo-class ``Novel``, and a
    Known sample rejected as Novel counts against its own class's recall.
    """
    if not (len(actual_labels) == len(actual_novel) == len(results)):
        raise DataError("actual labels, novelty flags and results must align")
    bip = bipartition_report(actual_novel, [r.is_novel for r in results])
    truth = [NOVEL if n else str(l) for l, n in zip(actual_labels, actual_novel)]
    pred = [r.predicted for r in results]
    full = classification_report(truth, pred)
    known_idx = [i for i, n in enumerate(actual_novel) if not n]
    if known_idx:
        known = classification_report([truth[i] for i in known_idx], [pred[i] for i in known_idx])
    else:
        known = (ConfusionMatrix([], np.zeros((0, 0), dtype=np.int64)),
                 F1Report([], {}, {}, {}, {}, 0.0))
    return EndToEndReport(bip, known, full)


def write_csv(rows: list[list], path) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in rows:
            w.writerow([format(v, ".17g") if isinstance(v, float) else v for v in row])
