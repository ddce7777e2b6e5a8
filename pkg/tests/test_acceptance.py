"""End-to-end acceptance checks, one test per criterion.

``conftest.py`` prints a PASS/FAIL line for each criterion at the end of the run.
"""

from __future__ import annotations

import json
import math
import time
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pytest

from teamsom import gen
from teamsom.cli import main
from teamsom.cluster import (
    adjusted_rand_index,
    assign_records,
    is_contiguous,
    som_ward_cluster,
    ward_objective,
)
from teamsom.lexicon import load_demo_lexicon, score_text, score_work_item
from teamsom.model import zscore_normalize
from teamsom.som import SomConfig, SomMap, init_map, quantization_error, topographic_error, train_batch
from teamsom.stats import Reference, kendall_tau_b, ks_statistic, ks_test, reference_cdf
from teamsom.viz import render_component_map

SVG = "{http://www.w3.org/2000/svg}"
GOLDEN = Path(__file__).parent / "golden" / "component_2x2.svg"


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


def brute_tau(x, y):
    n = len(x)
    c = d = tx = ty = 0
    for i in range(n):
        for j in range(i + 1, n):
            sx = (x[i] > x[j]) - (x[i] < x[j])
            sy = (y[i] > y[j]) - (y[i] < y[j])
            if sx == 0 and sy == 0:
                continue
            if sx == 0:
                tx += 1
            elif sy == 0:
                ty += 1
            elif sx == sy:
                c += 1
            else:
                d += 1
    return (c - d) / math.sqrt((c + d + tx) * (c + d + ty))


def grid_sup(x, cdf, grid_points=20_001):
    """sup |F_n - F| over a dense grid plus both one-sided limits at every sample point."""
    xs = np.sort(np.asarray(x, dtype=float))
    n = xs.shape[0]
    grid = np.linspace(xs[0] - 1.0, xs[-1] + 1.0, grid_points)
    on_grid = np.abs(np.searchsorted(xs, grid, side="right") / n - cdf(grid)).max()
    f = cdf(xs)
    right = np.abs(np.searchsorted(xs, xs, side="right") / n - f).max()
    left = np.abs(np.searchsorted(xs, xs, side="left") / n - f).max()
    return float(max(on_grid, right, left))


# ---------------------------------------------------------------- 1


def test_criterion_1_percentage_formula():
    with Timer() as t:
        rng = np.random.default_rng(0)
        words = ["buddy"] * 10 + ["zzq"] * 190
        rng.shuffle(words)
        count, pct = score_text(" ".join(words), load_demo_lexicon())
    assert count == 200
    assert pct["social"] == 5.0
    assert t.elapsed < 1.0


# ---------------------------------------------------------------- 2


def test_criterion_2_tau_b_oracle():
    with Timer() as t:
        rng = np.random.default_rng(2024)
        worst = 0.0
        checked = 0
        while checked < 200:
            n = int(rng.integers(2, 51))
            x = rng.integers(0, max(2, n // 3), n)
            y = rng.integers(0, max(2, n // 4), n)
            if len(set(x.tolist())) < 2 or len(set(y.tolist())) < 2:
                continue
            worst = max(worst, abs(kendall_tau_b(x, y).tau_b - brute_tau(x.tolist(), y.tolist())))
            checked += 1
        example = kendall_tau_b([1, 2, 2, 3], [1, 2, 3, 3]).tau_b
    assert worst <= 1e-12
    assert example == pytest.approx(0.8, abs=1e-12)
    assert t.elapsed < 5.0


# ---------------------------------------------------------------- 3


def test_criterion_3_tau_null_calibration():
    with Timer() as t:
        rng = np.random.default_rng(3)
        x = rng.normal(size=30)
        y = rng.normal(size=30)
        rejections = sum(kendall_tau_b(x, rng.permutation(y)).p_two_sided < 0.05 for _ in range(5000))
        rate = rejections / 5000
    print(f"tau null rejection rate {rate:.4f}")
    assert abs(rate - 0.05) <= 0.02
    assert t.elapsed < 60.0


# ---------------------------------------------------------------- 4


def test_criterion_4_ks_oracle_and_calibration():
    with Timer() as t:
        rng = np.random.default_rng(4)
        std_normal = reference_cdf(Reference("normal", (0.0, 1.0)))
        worst = 0.0
        for _ in range(100):
            sample = rng.normal(0.2, 1.3, int(rng.integers(1, 200)))
            worst = max(worst, abs(ks_statistic(sample, std_normal) - grid_sup(sample, std_normal)))
        uniform = Reference("uniform", (0.0, 1.0))
        d_single = ks_test([0.5], uniform).d_statistic
        d_three = ks_test([0.1, 0.2, 0.3], uniform).d_statistic
        rejections = sum(ks_test(rng.random(100), uniform).p_value < 0.05 for _ in range(5000))
        rate = rejections / 5000
    print(f"KS null rejection rate {rate:.4f}")
    assert worst <= 1e-9
    assert d_single == 0.5
    assert d_three == pytest.approx(0.7, abs=1e-15)
    assert abs(rate - 0.05) <= 0.02
    assert t.elapsed < 60.0


# ---------------------------------------------------------------- 5


def test_criterion_5_som_recovery():
    with Timer() as t:
        data, truth = gen.gaussian_benchmark(n=400, d=2, k=4, seed=0)
        norm = zscore_normalize(data)
        cfg = SomConfig(10, 10)
        initial = init_map(cfg, norm)
        trained = train_batch(initial, norm)
        labels = assign_records(trained, som_ward_cluster(trained, 4), norm)
        ari = adjusted_rand_index(truth, labels)
        qe_initial = quantization_error(initial, norm)
        qe_final = quantization_error(trained, norm)
        te = topographic_error(trained, norm)
        # same check from a random starting map
        random_start = init_map(SomConfig(10, 10, init="random"), norm)
        random_ratio = quantization_error(train_batch(random_start, norm), norm) / quantization_error(random_start, norm)
    print(f"ARI {ari:.4f}  QE {qe_initial:.4f} -> {qe_final:.4f}  TE {te:.4f}  random-init QE ratio {random_ratio:.4f}")
    assert ari >= 0.9
    assert qe_final <= 0.5 * qe_initial
    assert random_ratio <= 0.5
    assert te <= 0.10
    assert t.elapsed < 30.0


# ---------------------------------------------------------------- 6


def _partitions(n):
    def rec(labels, used):
        if len(labels) == n:
            yield tuple(labels)
            return
        for c in range(used + 1):
            yield from rec(labels + [c], max(used, c + 1))

    yield from rec([], 0)


def _fixtures():
    """Planted contiguous groups on small lattices, plus the hand-built two-pair case."""
    shapes = [(1, 4, "rectangular"), (2, 2, "hexagonal"), (2, 3, "rectangular"), (2, 4, "hexagonal"),
              (1, 8, "rectangular"), (3, 2, "hexagonal"), (1, 6, "hexagonal"), (2, 4, "rectangular")]
    out = [(SomMap(SomConfig(2, 2, "rectangular"), np.array([[0.0], [0.1], [10.0], [10.1]]), ("v",), 1), 2)]
    for index in range(40):
        rows, cols, lattice = shapes[index % len(shapes)]
        rng = np.random.default_rng(1000 + index)
        n = rows * cols
        adj = SomMap(SomConfig(rows, cols, lattice), np.zeros((n, 2)), ("a", "b"), 1).adjacency()
        groups = int(rng.integers(2, min(4, n) + 1))
        while True:
            planted = rng.integers(0, groups, n)
            if len(set(planted.tolist())) == groups and is_contiguous(planted, adj):
                break
        protos = rng.normal(0.0, 10.0, (groups, 2))[planted] + rng.normal(0.0, 0.3, (n, 2))
        som = SomMap(SomConfig(rows, cols, lattice), protos, ("a", "b"), 1)
        out += [(som, groups), (som, 1), (som, n)]
    return out


def test_criterion_6_som_ward_exhaustive_oracle():
    with Timer() as t:
        mismatches = 0
        fixtures = _fixtures()
        for som, k in fixtures:
            adj = som.adjacency()
            best = min(
                ward_objective(som.prototypes, p)
                for p in _partitions(som.n_nodes)
                if max(p) + 1 == k and is_contiguous(p, adj)
            )
            got = ward_objective(som.prototypes, som_ward_cluster(som, k).node_to_cluster)
            mismatches += not math.isclose(got, best, rel_tol=1e-12, abs_tol=1e-12)
    print(f"{len(fixtures)} fixtures, {mismatches} mismatches")
    assert mismatches == 0
    assert t.elapsed < 10.0


# ---------------------------------------------------------------- 7


def test_criterion_7_planted_correlations():
    with Timer() as t:
        cfg = gen.GenConfig(n_items=2000, seed=0)
        dataset, _ = gen.generate(cfg)
        lex = load_demo_lexicon()
        by_item = dataset.messages_by_item()
        profiles = [score_work_item(by_item[w.id], lex, w.id) for w in dataset.work_items]
        dev = np.array([w.developer_count for w in dataset.work_items], dtype=float)
        comments = np.array([w.comment_count for w in dataset.work_items], dtype=float)
        comment_dev = kendall_tau_b(comments, dev)
        pct = {c: np.array([p.percentages[c] for p in profiles]) for c in lex.categories}
        negemo_dev = kendall_tau_b(pct["negemo"], dev)
        uncoupled = {c: kendall_tau_b(pct[c], dev).tau_b for c in lex.categories if cfg.strength(c) == 0.0}
    print(f"tau(comment, dev) = {comment_dev.tau_b:.3f} (p={comment_dev.p_two_sided:.2g}); "
          f"tau(negemo, dev) = {negemo_dev.tau_b:.3f} (p={negemo_dev.p_two_sided:.2g}); "
          f"zero-coupled {', '.join(f'{c}={v:.3f}' for c, v in uncoupled.items())}")
    assert 0.55 <= comment_dev.tau_b <= 0.85 and comment_dev.p_two_sided < 0.05
    assert negemo_dev.tau_b > 0 and negemo_dev.p_two_sided < 0.05
    assert len(uncoupled) == 5
    assert all(abs(v) < 0.1 for v in uncoupled.values())
    assert t.elapsed < 60.0


# ---------------------------------------------------------------- 8 and 9


@pytest.fixture(scope="module")
def default_reports(tmp_path_factory):
    base = tmp_path_factory.mktemp("acceptance")
    runs = []
    for name in ("first", "second"):
        out = base / name
        with Timer() as t:
            code = main(["report", "--seed", "0", "-o", str(out)])
        runs.append((out, code, t.elapsed))
    return runs


def test_criterion_8_report_inventory_and_determinism(default_reports):
    manifests = []
    for out, code, elapsed in default_reports:
        assert code == 0
        assert elapsed < 120.0
        svgs = sorted(p.name for p in out.glob("*.svg"))
        assert len(svgs) == 13
        assert sum(s == "cluster_map.svg" for s in svgs) == 1
        assert sum(s.startswith("component_") for s in svgs) == 6
        assert sum(s.startswith("behavior_") for s in svgs) == 6
        table = (out / "correlations.md").read_text(encoding="utf-8")
        assert table.splitlines()[0].startswith("| Factor | 1 | 2 |")
        assert "*p < 0.05" in table
        manifests.append(json.loads((out / "manifest.json").read_text(encoding="utf-8")))
    print("run times " + ", ".join(f"{e:.1f}s" for _, _, e in default_reports))
    assert manifests[0]["complete"] and manifests[1]["complete"]
    assert manifests[0]["digest"] == manifests[1]["digest"]
    assert manifests[0]["files"] == manifests[1]["files"]


def _fills(doc):
    root = ET.fromstring(doc)
    return [p.get("fill") for p in root.iter(f"{SVG}polygon")]


def test_criterion_9_rendering_invariants(default_reports):
    out = default_reports[0][0]
    for path in sorted(out.glob("*.svg")):
        assert ET.parse(path).getroot().tag == f"{SVG}svg", path.name

    som = SomMap(SomConfig(3, 3), np.zeros((9, 1)), ("v",), 1)
    values = [4.0, -1.0, 2.0, 9.5, 3.0, 0.0, 1.0, 7.0, 5.0]
    fills = _fills(render_component_map(som, values))
    assert fills[values.index(min(values))] == "#0000ff"
    assert fills[values.index(max(values))] == "#ff0000"
    assert set(_fills(render_component_map(som, [2.5] * 9))) == {"#00ff00"}

    square = SomMap(SomConfig(2, 2), np.zeros((4, 1)), ("v",), 1)
    doc = render_component_map(square, [0.0, 1.0, 2.0, 3.0], None, "golden 2x2")
    assert doc == GOLDEN.read_text(encoding="utf-8")
    assert _fills(doc) == ["#0000ff", "#00aa55", "#55aa00", "#ff0000"]
