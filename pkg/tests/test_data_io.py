import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fewshot_osr.data_io import (EmbeddingRecord, SplitManifest, SynthConfig, generate_synthetic,
                                 read_embeddings, stack, write_dataset, write_embeddings)
from fewshot_osr.errors import DataError, DimensionError
from fewshot_osr.numeric import make_rng

finite = st.floats(allow_nan=False, allow_infinity=False)


def test_round_trip_100_records(tmp_path):
    rng = make_rng(0)
    recs = [EmbeddingRecord(f"r{i}", f"L{i % 3}", rng.normal(size=8) * 10.0 ** rng.integers(-30, 30),
                            [None, True, False][i % 3]) for i in range(100)]
    write_embeddings(recs, tmp_path / "e.jsonl")
    assert read_embeddings(tmp_path / "e.jsonl") == recs


@given(st.lists(finite, min_size=1, max_size=6))
def test_round_trip_any_finite_vector(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("rt") / "e.jsonl"
    write_embeddings([EmbeddingRecord("a", "b", values)], path)
    assert read_embeddings(path)[0].vector.tolist() == values


def test_seventeen_significant_digits(tmp_path):
    write_embeddings([EmbeddingRecord("a", "b", [0.1])], tmp_path / "e.jsonl")
    line = json.loads((tmp_path / "e.jsonl").read_text(), parse_float=str)
    assert line["vector"] == ["0.10000000000000001"]


def test_mixed_dims_reports_line(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text('{"id":"a","label":"x","novelty":null,"vector":[1,2]}\n'
                 '{"id":"b","label":"x","novelty":null,"vector":[1,2]}\n'
                 '{"id":"c","label":"x","novelty":null,"vector":[1,2,3]}\n')
    with pytest.raises(DimensionError, match=":3:"):
        read_embeddings(p)


def test_malformed_line_reports_line(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text('{"id":"a","label":"x","vector":[1]}\nnot json\n')
    with pytest.raises(DataError, match=":2:"):
        read_embeddings(p)


def test_duplicate_ids_rejected(tmp_path):
    p = tmp_path / "dup.jsonl"
    p.write_text('{"id":"a","label":"x","vector":[1]}\n{"id":"a","label":"y","vector":[2]}\n')
    with pytest.raises(DataError, match="duplicate"):
        read_embeddings(p)


def test_empty_file(tmp_path):
    (tmp_path / "e.jsonl").write_text("")
    assert read_embeddings(tmp_path / "e.jsonl") == []


def test_write_rejects_non_finite(tmp_path):
    with pytest.raises(DataError):
        write_embeddings([EmbeddingRecord("a", "b", [np.inf])], tmp_path / "e.jsonl")


# synthetic ----------------------------------------------------------------------

def test_default_split_sizes_and_disjointness():
    cfg = SynthConfig(samples_per_class=20)
    ds = generate_synthetic(cfg)
    m = ds.manifest
    assert (len(m.train_classes), len(m.dev_known), len(m.dev_novel), len(m.test_known), len(m.test_novel)) == (8, 5, 2, 4, 2)
    m.validate()
    assert len(ds.train) == 8 * 16 and len(ds.val) == 8 * 4
    assert {r.label for r in ds.train} == {r.label for r in ds.val} == set(m.train_classes)
    assert all(r.novelty == (r.label in m.dev_novel) for r in ds.dev)
    assert all(r.novelty == (r.label in m.test_novel) for r in ds.test)
    assert all(r.novelty is None for r in ds.train)
    assert not {r.id for r in ds.train} & {r.id for r in ds.val}


def test_centers_respect_separation():
    cfg = SynthConfig(cluster_separation=7.0, samples_per_class=4)
    c = np.array(list(generate_synthetic(cfg).centers.values()))
    d = np.linalg.norm(c[:, None] - c[None], axis=-1)
    assert d[~np.eye(len(c), dtype=bool)].min() >= 7.0


def test_nearest_center_oracle_is_perfect_when_well_separated():
    ds = generate_synthetic(SynthConfig(cluster_separation=20.0, cluster_spread=1.0, seed=3))
    names = list(ds.centers)
    C = np.array([ds.centers[n] for n in names])
    for r in ds.train + ds.val + ds.dev + ds.test:
        assert names[int(np.argmin(np.linalg.norm(C - r.vector, axis=1)))] == r.label


def test_synthetic_deterministic():
    a, b = generate_synthetic(SynthConfig(seed=9)), generate_synthetic(SynthConfig(seed=9))
    assert a.train == b.train and a.test == b.test and a.manifest == b.manifest


def test_unplaceable_centers_error():
    with pytest.raises(DataError, match="feature_dim"):
        generate_synthetic(SynthConfig(feature_dim=1, cluster_separation=10.0, max_center_tries=1,
                                       samples_per_class=2))


def test_invalid_config():
    with pytest.raises(ValueError):
        SynthConfig(cluster_spread=0.0)


@given(st.integers(2, 5), st.integers(1, 3), st.integers(1, 3), st.integers(1, 3), st.integers(1, 3),
       st.integers(0, 1000))
def test_manifest_disjoint_for_random_configs(tr, dk, dn, tk, tn, seed):
    cfg = SynthConfig(n_train_classes=tr, n_dev_known=dk, n_dev_novel=dn, n_test_known=tk,
                      n_test_novel=tn, samples_per_class=3, feature_dim=8, seed=seed)
    ds = generate_synthetic(cfg)
    ds.manifest.validate()
    labels = lambda recs: {r.label for r in recs}
    assert not labels(ds.test) & (labels(ds.train) | labels(ds.dev))


def test_manifest_validation_catches_overlap():
    with pytest.raises(DataError):
        SplitManifest(["a"], ["b"], ["a"], ["c"], ["d"]).validate()
    with pytest.raises(DataError):
        SplitManifest(["a"], ["b"], ["e"], ["a"], ["d"]).validate()


def test_write_dataset_files(tmp_path):
    cfg = SynthConfig(samples_per_class=5)
    write_dataset(generate_synthetic(cfg), tmp_path, cfg)
    assert sorted(p.name for p in tmp_path.iterdir()) == [
        "dev.jsonl", "manifest.json", "synth_config.json", "test.jsonl", "train.jsonl", "val.jsonl"]
    assert stack(read_embeddings(tmp_path / "dev.jsonl")).shape == (35, 16)
