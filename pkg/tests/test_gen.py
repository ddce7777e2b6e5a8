from __future__ import annotations

import hashlib

import numpy as np
import pytest

from teamsom import gen
from teamsom.cluster import adjusted_rand_index, assign_records, som_ward_cluster
from teamsom.errors import InvalidConfig
from teamsom.lexicon import load_demo_lexicon, score_work_item
from teamsom.model import build_feature_matrix, ingest_dataset, zscore_normalize
from teamsom.som import SomConfig, default_map_shape, init_map, train_batch
from teamsom.stats import kendall_tau_b


@pytest.fixture(scope="module")
def sample():
    return gen.generate(gen.GenConfig(n_items=2000, seed=11))


def behavior(dataset, category):
    lex = load_demo_lexicon()
    by_item = dataset.messages_by_item()
    return np.array([score_work_item(by_item[w.id], lex, w.id).percentages[category] for w in dataset.work_items])


def column(dataset, name):
    return np.array([getattr(w, name) for w in dataset.work_items], dtype=float)


def digest(paths):
    return [hashlib.sha256(p.read_bytes()).hexdigest() for p in paths]


def test_same_seed_same_bytes(tmp_path):
    cfg = gen.GenConfig(n_items=150, seed=3)
    a = gen.write_generated(*gen.generate(cfg), tmp_path / "a")
    b = gen.write_generated(*gen.generate(cfg), tmp_path / "b")
    assert digest(a) == digest(b)
    c = gen.write_generated(*gen.generate(gen.GenConfig(n_items=150, seed=4)), tmp_path / "c")
    assert digest(a) != digest(c)


def test_generated_files_ingest_cleanly(tmp_path):
    paths = gen.write_generated(*gen.generate(gen.GenConfig(n_items=300, seed=1)), tmp_path)
    ds = ingest_dataset(paths[0], paths[1], strict=False)
    assert ds.diagnostics == ()
    assert len(ds.work_items) == 300
    for w in ds.work_items:
        assert w.comment_count >= 1 and w.developer_count >= 1
        assert 1 <= w.role_count <= w.developer_count + 1
        assert 1.0 <= w.priority <= 4.0


def test_sidecar_contents(tmp_path):
    dataset, truth = gen.generate(gen.GenConfig(n_items=50, seed=2))
    paths = gen.write_generated(dataset, truth, tmp_path)
    side = gen.load_ground_truth(paths[2])
    assert len(side["items"]) == 50
    assert {item["latent_cluster"] for item in side["items"]} <= set(range(4))
    assert side["config"]["seed"] == 2
    assert set(side["items"][0]["rates"]) == set(gen.DEMO_CATEGORIES)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"n_items": 0},
        {"words_per_message": 0},
        {"coupling": {("comment_count", "developer_count"): 1.5}},
        {"coupling": {("iteration", "priority"): 0.2}},
        {"priority_range": (0.0, 4.0)},
    ],
)
def test_invalid_config(kwargs):
    with pytest.raises(InvalidConfig):
        gen.generate(gen.GenConfig(**kwargs))


def test_time_median_near_configured(sample):
    dataset, _ = sample
    med = float(np.median(column(dataset, "time_taken_days")))
    assert 20.0 <= med <= 60.0


def test_comment_developer_coupling(sample):
    dataset, _ = sample
    r = kendall_tau_b(column(dataset, "comment_count"), column(dataset, "developer_count"))
    assert 0.55 <= r.tau_b <= 0.85
    assert r.p_two_sided < 0.05


def test_negemo_coupling_sign(sample):
    dataset, _ = sample
    r = kendall_tau_b(behavior(dataset, "negemo"), column(dataset, "developer_count"))
    assert r.tau_b > 0
    assert r.p_two_sided < 0.05


@pytest.mark.parametrize("category", ["social", "posemo", "cogmech", "work", "achieve"])
def test_uncoupled_categories_near_zero(sample, category):
    dataset, _ = sample
    r = kendall_tau_b(behavior(dataset, category), column(dataset, "developer_count"))
    assert abs(r.tau_b) < 0.1


def test_zero_coupling_switches_off_dependence():
    cfg = gen.GenConfig(n_items=2000, seed=5, coupling={("comment_count", "developer_count"): 0.0})
    dataset, _ = gen.generate(cfg)
    r = kendall_tau_b(column(dataset, "comment_count"), column(dataset, "developer_count"))
    assert abs(r.tau_b) < 0.1


def test_negative_coupling_sign():
    cfg = gen.GenConfig(n_items=2000, seed=6, coupling={("comment_count", "developer_count"): -0.5})
    dataset, _ = gen.generate(cfg)
    r = kendall_tau_b(column(dataset, "comment_count"), column(dataset, "developer_count"))
    assert r.tau_b < 0 and r.p_two_sided < 0.05


def test_gaussian_benchmark_shape():
    data, labels = gen.gaussian_benchmark()
    assert data.shape == (400, 2)
    assert np.bincount(labels).tolist() == [100] * 4


@pytest.mark.xfail(
    strict=True,
    reason="latent clusters differ only in iteration/time/priority; the cluster-independent, mutually "
    "correlated count columns carry comparable z-scored variance, so the Ward objective prefers other "
    "partitions (ARI about 0.4-0.6)",
)
def test_latent_clusters_recovered(sample):
    dataset, truth = sample
    norm = zscore_normalize(build_feature_matrix(dataset))
    rows, cols = default_map_shape(norm)
    som = train_batch(init_map(SomConfig(rows, cols), norm), norm)
    labels = assign_records(som, som_ward_cluster(som, 4), norm)
    assert adjusted_rand_index(truth.latent_cluster, labels) >= 0.9
