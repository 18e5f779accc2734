"""Embedding JSONL files, structured-text artifacts and the synthetic dataset generator."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import DataError, DimensionError
from .numeric import make_rng

_STREAM_CENTERS = 21
_STREAM_SAMPLES = 22
_STREAM_SPLIT = 23


def format_float(x: float) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise DataError(f"cannot serialise non-finite value {x}")
    return format(x, ".17g")


def dumps_exact(obj) -> str:
    """Compact JSON where every float is written with 17 significant digits."""
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ",".join(f"{json.dumps(str(k))}:{dumps_exact(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, np.ndarray):
        return dumps_exact(obj.tolist())
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(dumps_exact(v) for v in obj) + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def write_json(path, obj) -> None:
    Path(path).write_text(dumps_exact(obj) + "\n")


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: malformed JSON ({e})") from e


# embedding records ------------------------------------------------------------

@dataclass
class EmbeddingRecord:
    id: str
    label: str
    vector: np.ndarray
    novelty: bool | None = None

    def __post_init__(self):
        self.vector = np.asarray(self.vector, dtype=np.float64)

    def __eq__(self, other):
        if not isinstance(other, EmbeddingRecord):
            return NotImplemented
        return (self.id == other.id and self.label == other.label and self.novelty == other.novelty
                and self.vector.shape == other.vector.shape and bool(np.all(self.vector == other.vector)))

    def to_line(self) -> str:
        return dumps_exact({"id": self.id, "label": self.label, "novelty": self.novelty,
                            "vector": self.vector})


def write_embeddings(records: Iterable[EmbeddingRecord], path) -> None:
    lines = []
    dim = None
    seen = set()
    for r in records:
        if dim is None:
            dim = r.vector.size
        elif r.vector.size != dim:
            raise DimensionError(f"record {r.id!r} has dim {r.vector.size}, expected {dim}")
        if r.id in seen:
            raise DataError(f"duplicate record id {r.id!r}")
        seen.add(r.id)
        lines.append(r.to_line() + "\n")
    Path(path).write_text("".join(lines))


def read_embeddings(path) -> list[EmbeddingRecord]:
    out = []
    dim = None
    seen = set()
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                rec = EmbeddingRecord(str(d["id"]), str(d["label"]),
                                      np.asarray(d["vector"], dtype=np.float64), d.get("novelty"))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise DataError(f"{path}:{lineno}: malformed record ({e})") from e
            if rec.vector.ndim != 1 or rec.vector.size == 0 or not np.all(np.isfinite(rec.vector)):
                raise DataError(f"{path}:{lineno}: vector must be a non-empty list of finite numbers")
            if rec.novelty is not None and not isinstance(rec.novelty, bool):
                raise DataError(f"{path}:{lineno}: novelty must be true, false or null")
            if dim is None:
                dim = rec.vector.size
            elif rec.vector.size != dim:
                raise DimensionError(f"{path}:{lineno}: vector dim {rec.vector.size}, expected {dim}")
            if rec.id in seen:
                raise DataError(f"{path}:{lineno}: duplicate id {rec.id!r}")
            seen.add(rec.id)
            out.append(rec)
    return out


def stack(records: list[EmbeddingRecord]) -> np.ndarray:
    if not records:
        return np.zeros((0, 0))
    return np.stack([r.vector for r in records])


# synthetic data ---------------------------------------------------------------

@dataclass
class SplitManifest:
    train_classes: list[str]
    dev_known: list[str]
    dev_novel: list[str]
    test_known: list[str]
    test_novel: list[str]

    def validate(self) -> None:
        groups = asdict(self)
        for name, members in groups.items():
            if len(set(members)) != len(members):
                raise DataError(f"{name} lists a class twice")
        train = set(self.train_classes)
        dev = set(self.dev_known) | set(self.dev_novel)
        test = set(self.test_known) | set(self.test_novel)
        if set(self.dev_known) & set(self.dev_novel):
            raise DataError("dev_known and dev_novel overlap")
        if set(self.test_known) & set(self.test_novel):
            raise DataError("test_known and test_novel overlap")
        if set(self.dev_novel) & train:
            raise DataError("dev_novel classes must be unseen in training")
        if test & (train | dev):
            raise DataError("test classes must be disjoint from train and dev classes")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SplitManifest":
        m = cls(**{k: list(d[k]) for k in cls.__dataclass_fields__})
        m.validate()
        return m


@dataclass
class SynthConfig:
    n_train_classes: int = 8
    n_dev_known: int = 5
    n_dev_novel: int = 2
    n_test_known: int = 4
    n_test_novel: int = 2
    samples_per_class: int = 100
    feature_dim: int = 16
    cluster_spread: float = 1.0
    cluster_separation: float = 10.0
    train_fraction: float = 0.8
    seed: int = 0
    max_center_tries: int = 1000

    def __post_init__(self):
        if not (self.cluster_spread > 0 and self.cluster_separation > 0):
            raise ValueError("cluster_spread and cluster_separation must be positive")
        if self.n_train_classes < 2:
            raise ValueError("need at least two training classes")
        for name in ("n_dev_known", "n_dev_novel", "n_test_known", "n_test_novel"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.samples_per_class < 2 or self.feature_dim < 1:
            raise ValueError("samples_per_class must be >= 2 and feature_dim >= 1")
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must lie in (0, 1)")

    @property
    def n_classes(self) -> int:
        return (self.n_train_classes + self.n_dev_known + self.n_dev_novel
                + self.n_test_known + self.n_test_novel)


@dataclass
class SyntheticDataset:
    train: list[EmbeddingRecord]
    val: list[EmbeddingRecord]
    dev: list[EmbeddingRecord]
    test: list[EmbeddingRecord]
    manifest: SplitManifest
    centers: dict[str, np.ndarray] = field(default_factory=dict)


def place_centers(n: int, dim: int, separation: float, rng: np.random.Generator,
                  max_tries: int = 1000) -> np.ndarray:
    """Rejection-sample n centers with pairwise distance >= separation."""
    # typical proposal spacing ~1.5x separation; widened in low dim so packing stays feasible
    scale = separation * max(1.5, n ** (1.0 / dim)) / math.sqrt(2.0 * dim)
    centers = []
    for c in range(n):
        for _ in range(max_tries):
            cand = rng.normal(0.0, scale, size=dim)
            if all(np.linalg.norm(cand - other) >= separation for other in centers):
                centers.append(cand)
                break
        else:
            raise DataError(
                f"could not place center {c} of {n} at separation {separation} after {max_tries} "
                f"tries; use a larger feature_dim or smaller separation"
            )
    return np.array(centers)


def generate_synthetic(cfg: SynthConfig) -> SyntheticDataset:
    """Gaussian clusters split by class into train(+val) / dev / test roles."""
    names = [f"class_{i:02d}" for i in range(cfg.n_classes)]
    cut = np.cumsum([cfg.n_train_classes, cfg.n_dev_known, cfg.n_dev_novel,
                     cfg.n_test_known, cfg.n_test_novel])
    manifest = SplitManifest(names[:cut[0]], names[cut[0]:cut[1]], names[cut[1]:cut[2]],
                             names[cut[2]:cut[3]], names[cut[3]:cut[4]])
    manifest.validate()

    centers = place_centers(cfg.n_classes, cfg.feature_dim, cfg.cluster_separation,
                            make_rng(cfg.seed, _STREAM_CENTERS), cfg.max_center_tries)
    sample_rng = make_rng(cfg.seed, _STREAM_SAMPLES)
    split_rng = make_rng(cfg.seed, _STREAM_SPLIT)

    def cluster(ci: int, novelty):
        pts = centers[ci] + sample_rng.normal(0.0, cfg.cluster_spread,
                                              size=(cfg.samples_per_class, cfg.feature_dim))
        return [EmbeddingRecord(f"{names[ci]}-{j:04d}", names[ci], pts[j], novelty)
                for j in range(cfg.samples_per_class)]

    train, val, dev, test = [], [], [], []
    n_fit = int(round(cfg.train_fraction * cfg.samples_per_class))
    n_fit = min(max(n_fit, 1), cfg.samples_per_class - 1)
    novel = set(manifest.dev_novel) | set(manifest.test_novel)
    for ci, name in enumerate(names):
        if name in manifest.train_classes:
            recs = cluster(ci, None)
            order = split_rng.permutation(len(recs))
            train.extend(recs[j] for j in sorted(order[:n_fit]))
            val.extend(recs[j] for j in sorted(order[n_fit:]))
        elif name in manifest.dev_known or name in manifest.dev_novel:
            dev.extend(cluster(ci, name in novel))
        else:
            test.extend(cluster(ci, name in novel))
    return SyntheticDataset(train, val, dev, test, manifest, dict(zip(names, centers)))


def write_dataset(ds: SyntheticDataset, out_dir, cfg: SynthConfig | None = None) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for split in ("train", "val", "dev", "test"):
        write_embeddings(getattr(ds, split), out / f"{split}.jsonl")
    write_json(out / "manifest.json", ds.manifest.to_dict())
    if cfg is not None:
        write_json(out / "synth_config.json", asdict(cfg))
