"""SOM-Ward: contiguity-constrained Ward agglomeration of map prototypes."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError, KOutOfRange, LengthMismatch, Mismatch, UntrainedMap
from .model import FeatureMatrix
from .som import SomMap, bmu_indices

log = logging.getLogger(__name__)

MAX_AUTO_K = 15


@dataclass(frozen=True)
class Merge:
    cost: float
    # clusters are named by their smallest node index
    pair: tuple[int, int]


@dataclass(frozen=True)
class ClusterAssignment:
    k: int
    node_to_cluster: tuple[int, ...]
    merge_trace: tuple[Merge, ...] = ()
    full_trace: tuple[Merge, ...] = field(default=(), repr=False)
    auto_k: bool = False

    def members(self, label: int) -> list[int]:
        return [i for i, c in enumerate(self.node_to_cluster) if c == label]

    @property
    def non_monotone(self) -> bool:
        costs = [m.cost for m in self.merge_trace]
        return any(b < a for a, b in zip(costs, costs[1:]))

    def to_json(self) -> str:
        record = {
            "k": self.k,
            "auto_k": self.auto_k,
            "node_to_cluster": list(self.node_to_cluster),
            "merge_trace": [{"cost": m.cost, "pair": list(m.pair)} for m in self.merge_trace],
            "full_trace": [{"cost": m.cost, "pair": list(m.pair)} for m in self.full_trace],
        }
        return json.dumps(record, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ClusterAssignment":
        r = json.loads(text)

        def trace(items):
            return tuple(Merge(float(m["cost"]), tuple(m["pair"])) for m in items)

        return cls(
            int(r["k"]),
            tuple(int(v) for v in r["node_to_cluster"]),
            trace(r.get("merge_trace", [])),
            trace(r.get("full_trace", [])),
            bool(r.get("auto_k", False)),
        )

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "ClusterAssignment":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def ward_cost(size_a: float, mean_a: np.ndarray, size_b: float, mean_b: np.ndarray) -> float:
    if size_a + size_b == 0:
        return 0.0
    diff = mean_a - mean_b
    return float(size_a * size_b / (size_a + size_b) * float(diff @ diff))


def agglomerate(
    prototypes: np.ndarray, adjacency: np.ndarray, weights: Sequence[float] | None = None
) -> list[Merge]:
    """Full contiguity-constrained Ward agglomeration down to one cluster per component.

    Only clusters containing at least one lattice-adjacent node pair may merge.
    Equal costs are resolved by the smaller (min node of A, min node of B).
    """
    protos = np.asarray(prototypes, dtype=float)
    n = protos.shape[0]
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    size = {i: float(w[i]) for i in range(n)}
    # zero-weight nodes still need a location; use their own prototype
    mean = {i: protos[i].copy() for i in range(n)}
    nbrs = {i: set(int(j) for j in np.flatnonzero(adjacency[i])) for i in range(n)}
    costs: dict[tuple[int, int], float] = {}
    for a in range(n):
        for b in nbrs[a]:
            if a < b:
                costs[(a, b)] = ward_cost(size[a], mean[a], size[b], mean[b])

    trace: list[Merge] = []
    while costs:
        (a, b), cost = min(costs.items(), key=lambda kv: (kv[1], kv[0]))
        trace.append(Merge(cost, (a, b)))
        total = size[a] + size[b]
        if total > 0:
            mean[a] = (size[a] * mean[a] + size[b] * mean[b]) / total
        else:
            mean[a] = (mean[a] + mean[b]) / 2
        size[a] = total
        del size[b], mean[b]
        merged = (nbrs[a] | nbrs.pop(b)) - {a, b}
        for c in nbrs[a] | {b}:
            costs.pop((min(a, c), max(a, c)), None)
        for c in merged:
            costs.pop((min(b, c), max(b, c)), None)
            nbrs[c].discard(b)
            nbrs[c].add(a)
        nbrs[a] = merged
        for c in merged:
            costs[(min(a, c), max(a, c))] = ward_cost(size[a], mean[a], size[c], mean[c])
    return trace


def _labels_after(n: int, trace: Sequence[Merge], n_merges: int) -> tuple[int, ...]:
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for m in trace[:n_merges]:
        ra, rb = find(m.pair[0]), find(m.pair[1])
        parent[max(ra, rb)] = min(ra, rb)
    labels: dict[int, int] = {}
    out = []
    for i in range(n):
        root = find(i)
        if root not in labels:
            labels[root] = len(labels) + 1
        out.append(labels[root])
    return tuple(out)


def choose_k(trace: Sequence[Merge], n_nodes: int) -> int:
    """Largest relative jump in merge cost, searched over k in [2, min(15, ceil(n/4))].

    ``cost(k)`` is the cost of the merge that takes k clusters to k-1. Ties
    keep the smallest k.
    """
    hi = min(MAX_AUTO_K, math.ceil(n_nodes / 4), n_nodes - 1)
    if hi < 2:
        return min(2, n_nodes)

    def cost(k):
        return trace[n_nodes - k].cost

    best_k, best_ratio = 2, -1.0
    for k in range(2, hi + 1):
        num, den = cost(k), cost(k + 1)
        if den > 0:
            ratio = num / den
        else:
            ratio = math.inf if num > 0 else 1.0
        if ratio > best_ratio:
            best_k, best_ratio = k, ratio
    return best_k


def som_ward_cluster(
    som: SomMap, k: int | None = None, *, weights: Sequence[float] | None = None
) -> ClusterAssignment:
    """Partition the map into ``k`` lattice-connected clusters.

    ``weights`` (e.g. record counts per node) switches from plain prototype
    means to weighted means; the default treats every node equally.
    """
    if som.epochs_trained < 1:
        raise UntrainedMap("map has not been trained")
    n = som.n_nodes
    if k is not None and not 1 <= k <= n:
        raise KOutOfRange(f"k={k} outside [1, {n}]")
    if weights is not None and len(weights) != n:
        raise LengthMismatch(f"{len(weights)} weights for {n} nodes")
    trace = agglomerate(som.prototypes, som.adjacency(), weights)
    if len(trace) != n - 1:
        raise DataError("map lattice is not connected")
    auto = k is None
    if auto:
        k = choose_k(trace, n)
    applied = tuple(trace[: n - k])
    result = ClusterAssignment(k, _labels_after(n, trace, n - k), applied, tuple(trace), auto)
    if result.non_monotone:
        log.info("SOM-Ward merge costs are non-monotone for k=%d", k)
    return result


def assign_records(som: SomMap, clusters: ClusterAssignment, data) -> np.ndarray:
    if len(clusters.node_to_cluster) != som.n_nodes:
        raise Mismatch("cluster assignment does not match map")
    lookup = np.asarray(clusters.node_to_cluster, dtype=np.int64)
    return lookup[bmu_indices(som, data)]


def is_contiguous(node_labels: Sequence[int], adjacency: np.ndarray) -> bool:
    """Every label's nodes form one connected component under ``adjacency``."""
    labels = list(node_labels)
    for lab in set(labels):
        nodes = [i for i, v in enumerate(labels) if v == lab]
        seen = {nodes[0]}
        stack = [nodes[0]]
        while stack:
            i = stack.pop()
            for j in np.flatnonzero(adjacency[i]):
                j = int(j)
                if labels[j] == lab and j not in seen:
                    seen.add(j)
                    stack.append(j)
        if len(seen) != len(nodes):
            return False
    return True


def ward_objective(points: np.ndarray, labels: Sequence[int]) -> float:
    """Total within-cluster sum of squares."""
    pts = np.asarray(points, dtype=float)
    labels = np.asarray(labels)
    total = 0.0
    for lab in np.unique(labels):
        grp = pts[labels == lab]
        total += float(((grp - grp.mean(axis=0)) ** 2).sum())
    return total


@dataclass(frozen=True)
class ClusterProfile:
    label: int
    size: int
    means: dict[str, float]
    medians: dict[str, float]
    extra_means: dict[str, float]


def cluster_profiles(
    labels: Sequence[int], features: FeatureMatrix, extra: Mapping[str, Sequence[float]] | None = None
) -> list[ClusterProfile]:
    labels = np.asarray(labels)
    n = features.values.shape[0]
    if labels.shape != (n,):
        raise LengthMismatch(f"{labels.shape[0]} labels for {n} records")
    extra = dict(extra or {})
    for name, col in extra.items():
        if len(col) != n:
            raise LengthMismatch(f"associated column {name!r} has {len(col)} values for {n} records")
    out = []
    for lab in sorted(set(labels.tolist())):
        mask = labels == lab
        block = features.values[mask]
        out.append(
            ClusterProfile(
                int(lab),
                int(mask.sum()),
                {c: float(block[:, j].mean()) for j, c in enumerate(features.column_names)},
                {c: float(np.median(block[:, j])) for j, c in enumerate(features.column_names)},
                {name: float(np.asarray(col, dtype=float)[mask].mean()) for name, col in extra.items()},
            )
        )
    return out


def profiles_markdown(profiles: Sequence[ClusterProfile]) -> str:
    if not profiles:
        return ""
    feats = list(profiles[0].means)
    extras = list(profiles[0].extra_means)
    head = ["Cluster", "Size"] + [f"{f} mean" for f in feats] + [f"{f} median" for f in feats] + [f"{e} mean" for e in extras]
    lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    for p in profiles:
        cells = [f"C{p.label}", str(p.size)]
        cells += [f"{p.means[f]:.2f}" for f in feats]
        cells += [f"{p.medians[f]:.2f}" for f in feats]
        cells += [f"{p.extra_means[e]:.2f}" for e in extras]
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def adjusted_rand_index(labels_true: Sequence, labels_pred: Sequence) -> float:
    """Chance-corrected Rand index between two partitions of the same records."""
    a = np.asarray(labels_true)
    b = np.asarray(labels_pred)
    if a.shape != b.shape:
        raise LengthMismatch("label vectors differ in length")
    n = a.shape[0]
    if n < 2:
        return 1.0
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)

    def pairs(v):
        v = np.asarray(v, dtype=float)
        return float((v * (v - 1) / 2).sum())

    index = pairs(table)
    sum_a = pairs(table.sum(axis=1))
    sum_b = pairs(table.sum(axis=0))
    expected = sum_a * sum_b / (n * (n - 1) / 2)
    maximum = (sum_a + sum_b) / 2
    if maximum == expected:
        return 1.0
    return (index - expected) / (maximum - expected)
