from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from teamsom.errors import DataError, DimensionMismatch, IndexOutOfRange, SingleNodeMap
from teamsom.model import FeatureMatrix
from teamsom.som import (
    SomConfig,
    SomMap,
    bmu_indices,
    find_bmu,
    init_map,
    lattice_distance,
    project_attribute,
    quantization_error,
    topographic_error,
    train_batch,
)


def fm(values):
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    return FeatureMatrix(
        tuple(f"r{i}" for i in range(values.shape[0])),
        tuple(f"f{j}" for j in range(values.shape[1])),
        values,
    )


def hand_map(rows, cols, protos, lattice="hexagonal", **kw):
    protos = np.asarray(protos, dtype=float)
    if protos.ndim == 1:
        protos = protos[:, None]
    cfg = SomConfig(rows, cols, lattice, **kw)
    return SomMap(cfg, protos, tuple(f"f{j}" for j in range(protos.shape[1])), epochs_trained=1)


def test_hex_distances():
    som = hand_map(3, 3, np.zeros(9))
    assert lattice_distance(som, 0, 1) == pytest.approx(1.0)
    # node (1,0) is index 3; node (2,0) is index 6
    assert lattice_distance(som, 0, 3) == pytest.approx(1.0)
    assert lattice_distance(som, 0, 6) == pytest.approx(math.sqrt(3))
    with pytest.raises(IndexOutOfRange):
        lattice_distance(som, 0, 9)


def test_hex_interior_node_has_six_neighbours():
    som = hand_map(3, 3, np.zeros(9))
    assert len(som.neighbors()[4]) == 6
    rect = hand_map(3, 3, np.zeros(9), lattice="rectangular")
    assert len(rect.neighbors()[4]) == 4


def test_sigma_schedule():
    cfg = SomConfig(10, 6, epochs=50)
    assert cfg.sigma0 == 5.0
    assert cfg.sigma_at(0) == pytest.approx(5.0)
    assert cfg.sigma_at(49) == pytest.approx(0.5)
    assert cfg.sigma_at(10) > cfg.sigma_at(11)
    with pytest.raises(DataError):
        SomConfig(2, 2, sigma0=0.1, sigma_final=0.5)


def test_random_init_is_seeded():
    data = fm(np.random.default_rng(1).normal(size=(40, 3)))
    cfg = SomConfig(4, 3, init="random", seed=11)
    assert np.array_equal(init_map(cfg, data).prototypes, init_map(cfg, data).prototypes)
    other = init_map(SomConfig(4, 3, init="random", seed=12), data)
    assert not np.array_equal(init_map(cfg, data).prototypes, other.prototypes)


def test_pca_plane_stays_in_data_plane():
    rng = np.random.default_rng(3)
    basis = np.linalg.qr(rng.normal(size=(5, 2)))[0]
    offset = rng.normal(size=5)
    data = offset + rng.normal(size=(200, 2)) * [3.0, 1.0] @ basis.T
    som = init_map(SomConfig(6, 4), fm(data))
    # plane fitted independently: least squares on centred data
    centred = som.prototypes - offset
    coef, *_ = np.linalg.lstsq(basis, centred.T, rcond=None)
    residual = centred.T - basis @ coef
    assert np.abs(residual).max() <= 1e-9


def test_single_node_pca_is_mean():
    data = np.random.default_rng(0).normal(size=(30, 4))
    som = init_map(SomConfig(1, 1), fm(data))
    assert np.allclose(som.prototypes[0], data.mean(axis=0))


def test_pca_needs_enough_records():
    with pytest.raises(DataError):
        init_map(SomConfig(5, 5), fm(np.arange(10.0)))


def test_find_bmu_exact_prototype():
    som = hand_map(2, 2, [[0, 0], [1, 0], [0, 1], [1, 1]])
    for k in range(4):
        assert find_bmu(som, som.prototypes[k]) == k


def test_single_node_bmu():
    som = hand_map(1, 1, [[3.0, 4.0]])
    assert find_bmu(som, [100.0, -7.0]) == 0


def test_bmu_matches_exhaustive_scan():
    som = hand_map(2, 2, [[0.2, 0.1], [1.5, -0.3], [0.4, 2.0], [2.2, 2.1]])
    probe = np.array([1.1, 0.9])
    oracle = min(range(4), key=lambda k: sum((probe - som.prototypes[k]) ** 2))
    assert find_bmu(som, probe) == oracle


def test_bmu_dimension_check():
    som = hand_map(1, 2, [[0.0], [1.0]])
    with pytest.raises(DimensionMismatch):
        find_bmu(som, [1.0, 2.0])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 20))
def test_bmu_indices_match_brute_force(seed, n):
    rng = np.random.default_rng(seed)
    som = hand_map(3, 2, rng.normal(size=(6, 3)))
    x = rng.normal(size=(n, 3))
    expected = [int(np.argmin([np.sum((row - p) ** 2) for p in som.prototypes])) for row in x]
    assert bmu_indices(som, x).tolist() == expected


def test_constant_data_converges():
    v = np.array([1.5, -2.0, 0.25])
    data = fm(np.tile(v, (25, 1)))
    som = init_map(SomConfig(3, 3, init="random", epochs=20), fm(np.random.default_rng(0).normal(size=(25, 3))))
    trained = train_batch(som, data)
    assert np.abs(trained.prototypes - v).max() <= 1e-6


def lloyd(x, centres, iters=100):
    centres = centres.copy()
    for _ in range(iters):
        d = ((x[:, None, :] - centres[None]) ** 2).sum(axis=2)
        lab = d.argmin(axis=1)
        new = np.array([x[lab == c].mean(axis=0) if (lab == c).any() else centres[c] for c in range(len(centres))])
        if np.array_equal(new, centres):
            break
        centres = new
    return centres


def test_tiny_sigma_reduces_to_kmeans():
    rng = np.random.default_rng(5)
    x = np.vstack([rng.normal(-5, 0.5, size=(30, 2)), rng.normal(5, 0.5, size=(30, 2))])
    cfg = SomConfig(1, 2, lattice="rectangular", epochs=30, sigma0=0.01, sigma_final=0.01, init="random", seed=2)
    start = init_map(cfg, fm(x))
    trained = train_batch(start, fm(x))
    assert np.abs(trained.prototypes - lloyd(x, start.prototypes)).max() <= 1e-3


def test_training_is_deterministic():
    data = fm(np.random.default_rng(9).normal(size=(80, 3)))
    cfg = SomConfig(4, 4, epochs=10)
    a = train_batch(init_map(cfg, data), data)
    b = train_batch(init_map(cfg, data), data)
    assert np.array_equal(a.prototypes, b.prototypes)
    assert a.epochs_trained == 10


def test_qe_zero_on_exact_hits():
    som = hand_map(1, 2, [[0.0, 0.0], [1.0, 1.0]])
    assert quantization_error(som, fm([[0, 0], [1, 1], [1, 1]])) == 0.0


def test_qe_hand_case():
    som = hand_map(1, 1, [[0.0, 0.0]])
    assert quantization_error(som, fm([[1, 0], [-1, 0]])) == 1.0


def test_te_adjacent_pair():
    som = hand_map(1, 2, [[0.0], [1.0]])
    data = fm(np.random.default_rng(0).normal(size=20))
    assert topographic_error(som, data) == 0.0


def test_te_opposite_corners():
    som = hand_map(1, 3, [[0.0], [100.0], [0.1]], lattice="rectangular")
    assert topographic_error(som, fm([0.05, 0.02, 0.08])) == 1.0


def test_te_single_node():
    with pytest.raises(SingleNodeMap):
        topographic_error(hand_map(1, 1, [[0.0]]), fm([1.0]))


def test_project_constant():
    som = hand_map(3, 3, np.linspace(0, 1, 9))
    out = project_attribute(som, fm([0.0, 0.01]), [4.0, 4.0])
    assert np.allclose(out, 4.0)


def test_project_two_nodes():
    som = hand_map(1, 2, [[0.0], [1.0]])
    assert project_attribute(som, fm([0.0, 1.0]), [0.0, 10.0]).tolist() == [0.0, 10.0]


def test_project_fills_from_neighbours():
    som = hand_map(1, 3, [[0.0], [50.0], [100.0]], lattice="rectangular")
    out = project_attribute(som, fm([0.0, 100.0]), [2.0, 4.0])
    assert out.tolist() == [2.0, 3.0, 4.0]


def test_map_json_round_trip(tmp_path):
    som = hand_map(2, 3, np.random.default_rng(0).normal(size=(6, 2)), epochs=7)
    som.save(tmp_path / "m.json")
    back = SomMap.load(tmp_path / "m.json")
    assert back.config == som.config
    assert np.array_equal(back.prototypes, som.prototypes)
    assert back.epochs_trained == som.epochs_trained


def test_frozen_sigma_qe_settles():
    from teamsom.gen import gaussian_benchmark
    from teamsom.model import zscore_normalize

    data = zscore_normalize(gaussian_benchmark(n=200, seed=1)[0])
    cfg = SomConfig(5, 5, epochs=1, sigma0=0.5, sigma_final=0.5)
    som = init_map(cfg, data)
    qes, bmus = [], []
    for _ in range(40):
        bmus.append(bmu_indices(som, data))
        som = train_batch(som, data)
        qes.append(quantization_error(som, data))
    stable = next(i for i in range(1, 40) if np.array_equal(bmus[i], bmus[i - 1]))
    for a, b in zip(qes[stable:], qes[stable + 1:]):
        assert b <= a + 1e-9


def test_projected_feature_tracks_component_plane():
    from teamsom.gen import gaussian_benchmark
    from teamsom.model import zscore_normalize
    from teamsom.stats import kendall_tau_b

    data = zscore_normalize(gaussian_benchmark()[0])
    som = train_batch(init_map(SomConfig(10, 10), data), data)
    hit = np.bincount(bmu_indices(som, data), minlength=som.n_nodes) > 0
    for j in range(data.shape[1]):
        projected = project_attribute(som, data, data.values[:, j])
        assert kendall_tau_b(projected[hit], som.prototypes[hit, j]).tau_b > 0
