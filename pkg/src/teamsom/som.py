"""Kohonen self-organizing map with deterministic batch training.

Nodes are indexed row-major (``index = r * cols + c``). On the hexagonal
lattice odd rows are shifted right by half a cell so every interior node has
six neighbours at unit distance.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    DataError,
    DimensionMismatch,
    EmptyData,
    IndexOutOfRange,
    LengthMismatch,
    SingleNodeMap,
)
from .model import FeatureMatrix

ADJACENCY_RADIUS = 1.01
LATTICES = ("hexagonal", "rectangular")
INITS = ("pca_plane", "random")
_CHUNK = 2048


class DegenerateCovarianceWarning(UserWarning):
    """PCA initialization fell back to random because the data has no spread."""


@dataclass(frozen=True)
class SomConfig:
    rows: int
    cols: int
    lattice: str = "hexagonal"
    epochs: int = 50
    sigma0: float | None = None  # None -> max(rows, cols) / 2
    sigma_final: float = 0.5
    init: str = "pca_plane"
    seed: int = 0

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise DataError("rows and cols must be >= 1")
        if self.lattice not in LATTICES:
            raise DataError(f"lattice must be one of {LATTICES}")
        if self.init not in INITS:
            raise DataError(f"init must be one of {INITS}")
        if self.epochs < 1:
            raise DataError("epochs must be >= 1")
        if self.sigma0 is None:
            object.__setattr__(self, "sigma0", max(self.rows, self.cols) / 2.0)
        if not self.sigma_final > 0:
            raise DataError("sigma_final must be > 0")
        if self.sigma0 < self.sigma_final:
            raise DataError(f"sigma0 ({self.sigma0}) must be >= sigma_final ({self.sigma_final})")

    @property
    def n_nodes(self) -> int:
        return self.rows * self.cols

    def sigma_at(self, epoch: int) -> float:
        if self.epochs == 1:
            return float(self.sigma0)
        return float(self.sigma0 * (self.sigma_final / self.sigma0) ** (epoch / (self.epochs - 1)))


def lattice_positions(rows: int, cols: int, lattice: str = "hexagonal") -> np.ndarray:
    r, c = np.divmod(np.arange(rows * cols), cols)
    if lattice == "hexagonal":
        x = c + 0.5 * (r % 2)
        y = r * (math.sqrt(3) / 2)
    else:
        x = c.astype(float)
        y = r.astype(float)
    return np.column_stack([x, y]).astype(float)


@dataclass(frozen=True)
class SomMap:
    config: SomConfig
    prototypes: np.ndarray
    feature_names: tuple[str, ...]
    epochs_trained: int = 0
    positions: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        protos = np.array(self.prototypes, dtype=float)
        if protos.ndim != 2 or protos.shape[0] != self.config.n_nodes:
            raise DimensionMismatch(
                f"prototypes must have shape ({self.config.n_nodes}, d), got {protos.shape}"
            )
        if protos.shape[1] != len(self.feature_names):
            raise DimensionMismatch("prototype dimension does not match feature names")
        protos.setflags(write=False)
        pos = lattice_positions(self.config.rows, self.config.cols, self.config.lattice)
        pos.setflags(write=False)
        object.__setattr__(self, "prototypes", protos)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def n_nodes(self) -> int:
        return self.config.n_nodes

    @property
    def dim(self) -> int:
        return self.prototypes.shape[1]

    def distance_matrix(self) -> np.ndarray:
        diff = self.positions[:, None, :] - self.positions[None, :, :]
        return np.sqrt((diff**2).sum(axis=-1))

    def adjacency(self) -> np.ndarray:
        d = self.distance_matrix()
        adj = d <= ADJACENCY_RADIUS
        np.fill_diagonal(adj, False)
        return adj

    def neighbors(self) -> list[list[int]]:
        adj = self.adjacency()
        return [list(np.flatnonzero(row)) for row in adj]

    # -- serialization

    def to_json(self) -> str:
        record = {
            "config": asdict(self.config),
            "feature_names": list(self.feature_names),
            "epochs_trained": self.epochs_trained,
            "prototypes": [float(v) for v in self.prototypes.ravel()],
        }
        return json.dumps(record, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SomMap":
        record = json.loads(text)
        config = SomConfig(**record["config"])
        names = tuple(record["feature_names"])
        protos = np.array(record["prototypes"], dtype=float).reshape(config.n_nodes, len(names))
        return cls(config, protos, names, int(record.get("epochs_trained", 0)))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "SomMap":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def lattice_distance(som: SomMap, node_a: int, node_b: int) -> float:
    n = som.n_nodes
    for node in (node_a, node_b):
        if not 0 <= node < n:
            raise IndexOutOfRange(f"node {node} outside [0, {n})")
    a, b = som.positions[node_a], som.positions[node_b]
    return float(math.hypot(a[0] - b[0], a[1] - b[1]))


def default_map_shape(data: FeatureMatrix) -> tuple[int, int]:
    """Grid of about ``5 * sqrt(N)`` nodes shaped after the data's spread.

    The rows:cols ratio follows the ratio of the two largest covariance
    eigenvalues.
    """
    x = np.asarray(data.values, dtype=float)
    n = x.shape[0]
    if n == 0:
        raise EmptyData("no records")
    nodes = max(1, int(round(5 * math.sqrt(n))))
    ratio = 1.0
    if n >= 2 and x.shape[1] >= 2:
        eig = np.sort(np.linalg.eigvalsh(np.cov(x, rowvar=False)))[::-1]
        if eig[1] > 1e-12:
            ratio = float(eig[0] / eig[1])
    rows = max(1, int(round(math.sqrt(nodes * ratio))))
    cols = max(1, int(round(nodes / rows)))
    return rows, cols


def _data_array(som: SomMap, data) -> np.ndarray:
    x = np.asarray(data.values if isinstance(data, FeatureMatrix) else data, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != som.dim:
        raise DimensionMismatch(f"data has {x.shape[1]} features, map expects {som.dim}")
    return x


def init_map(config: SomConfig, data: FeatureMatrix) -> SomMap:
    x = np.asarray(data.values, dtype=float)
    if x.ndim != 2 or x.shape[1] < 1:
        raise DimensionMismatch("data must have at least one feature column")
    if x.shape[0] == 0:
        raise EmptyData("no records to initialize from")
    names = data.column_names
    if config.init == "pca_plane":
        if config.n_nodes > x.shape[0]:
            raise DataError(
                f"pca_plane init needs at least as many records ({x.shape[0]}) as nodes ({config.n_nodes})"
            )
        protos = _pca_plane(config, x)
        if protos is not None:
            return SomMap(config, protos, names)
        warnings.warn("data covariance is degenerate; using random init", DegenerateCovarianceWarning, stacklevel=2)
    return SomMap(config, _random_protos(config, x), names)


def _random_protos(config: SomConfig, x: np.ndarray) -> np.ndarray:
    rng = np.random.default_rng(config.seed)
    lo, hi = x.min(axis=0), x.max(axis=0)
    return lo + rng.random((config.n_nodes, x.shape[1])) * (hi - lo)


def _pca_plane(config: SomConfig, x: np.ndarray) -> np.ndarray | None:
    mean = x.mean(axis=0)
    if config.n_nodes == 1:
        return mean[None, :].copy()
    if x.shape[0] < 2:
        return None
    cov = np.cov(x, rowvar=False).reshape(x.shape[1], x.shape[1])
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    if not evals[0] > 1e-12:
        return None
    # fix eigenvector signs so the result does not depend on the LAPACK build
    for k in range(evecs.shape[1]):
        j = np.argmax(np.abs(evecs[:, k]))
        if evecs[j, k] < 0:
            evecs[:, k] = -evecs[:, k]

    pos = lattice_positions(config.rows, config.cols, config.lattice)
    coords = np.zeros_like(pos)
    for axis in range(2):
        span = pos[:, axis].max() - pos[:, axis].min()
        if span > 0:
            coords[:, axis] = 2 * (pos[:, axis] - pos[:, axis].min()) / span - 1
    # longest lattice side follows the first principal component
    spans = np.ptp(pos, axis=0)
    major, minor = (0, 1) if spans[0] >= spans[1] else (1, 0)
    protos = mean + np.outer(coords[:, major], math.sqrt(evals[0]) * evecs[:, 0])
    if len(evals) > 1 and evals[1] > 1e-12:
        protos = protos + np.outer(coords[:, minor], math.sqrt(evals[1]) * evecs[:, 1])
    return protos


def _sq_distances(x: np.ndarray, protos: np.ndarray) -> np.ndarray:
    diff = x[:, None, :] - protos[None, :, :]
    return (diff * diff).sum(axis=-1)


def bmu_indices(som: SomMap, data) -> np.ndarray:
    """Best-matching node of every record (lowest index wins ties)."""
    x = _data_array(som, data)
    out = np.empty(x.shape[0], dtype=np.int64)
    for start in range(0, x.shape[0], _CHUNK):
        out[start:start + _CHUNK] = np.argmin(_sq_distances(x[start:start + _CHUNK], som.prototypes), axis=1)
    return out


def find_bmu(som: SomMap, vector: Sequence[float]) -> int:
    v = np.asarray(vector, dtype=float)
    if v.ndim != 1 or v.shape[0] != som.dim:
        raise DimensionMismatch(f"vector dimension {v.shape} does not match map dimension {som.dim}")
    return int(bmu_indices(som, v[None, :])[0])


def _two_best(som: SomMap, x: np.ndarray) -> np.ndarray:
    out = np.empty((x.shape[0], 2), dtype=np.int64)
    for start in range(0, x.shape[0], _CHUNK):
        d = _sq_distances(x[start:start + _CHUNK], som.prototypes)
        out[start:start + _CHUNK] = np.argsort(d, axis=1, kind="stable")[:, :2]
    return out


def train_batch(som: SomMap, data: FeatureMatrix) -> SomMap:
    """Run ``config.epochs`` batch epochs with an exponentially shrinking Gaussian kernel.

    Each epoch assigns every record to its BMU, then replaces every
    prototype with the kernel-weighted mean of all records. A prototype whose
    kernel weights sum to zero keeps its previous value.
    """
    x = _data_array(som, data)
    if x.shape[0] == 0:
        raise EmptyData("no records to train on")
    cfg = som.config
    n = som.n_nodes
    sq_lattice = som.distance_matrix() ** 2
    protos = np.array(som.prototypes, dtype=float)
    current = som
    for epoch in range(cfg.epochs):
        sigma = cfg.sigma_at(epoch)
        bmus = bmu_indices(current, x)
        # per-node sums accumulated in stored record order
        sums = np.zeros((n, x.shape[1]))
        np.add.at(sums, bmus, x)
        counts = np.bincount(bmus, minlength=n).astype(float)
        h = np.exp(-sq_lattice / (2.0 * sigma * sigma))  # h[c, i]
        num = (h[:, :, None] * sums[:, None, :]).sum(axis=0)
        den = (h * counts[:, None]).sum(axis=0)
        ok = den > 0
        protos = protos.copy()
        protos[ok] = num[ok] / den[ok, None]
        current = SomMap(cfg, protos, som.feature_names, som.epochs_trained + epoch + 1)
    return current


def quantization_error(som: SomMap, data: FeatureMatrix) -> float:
    x = _data_array(som, data)
    if x.shape[0] == 0:
        raise EmptyData("no records")
    bmus = bmu_indices(som, x)
    return float(np.linalg.norm(x - som.prototypes[bmus], axis=1).mean())


def topographic_error(som: SomMap, data: FeatureMatrix) -> float:
    if som.n_nodes < 2:
        raise SingleNodeMap("topographic error needs at least two nodes")
    x = _data_array(som, data)
    if x.shape[0] == 0:
        raise EmptyData("no records")
    best = _two_best(som, x)
    adj = som.adjacency()
    return float(np.mean(~adj[best[:, 0], best[:, 1]]))


def project_attribute(som: SomMap, data: FeatureMatrix, values: Sequence[float]) -> np.ndarray:
    """Average an associated (non-training) attribute over each node's records.

    Nodes that receive no records take the mean of their already-filled
    neighbours, sweeping outward until the whole lattice is filled.
    """
    x = _data_array(som, data)
    vals = np.asarray(values, dtype=float)
    if vals.shape != (x.shape[0],):
        raise LengthMismatch(f"{vals.shape[0] if vals.ndim else 0} values for {x.shape[0]} records")
    if x.shape[0] == 0:
        raise EmptyData("no records")
    n = som.n_nodes
    bmus = bmu_indices(som, x)
    sums = np.zeros(n)
    np.add.at(sums, bmus, vals)
    counts = np.bincount(bmus, minlength=n)
    out = np.full(n, np.nan)
    filled = counts > 0
    out[filled] = sums[filled] / counts[filled]
    neigh = som.neighbors()
    while not filled.all():
        new = out.copy()
        new_filled = filled.copy()
        for i in np.flatnonzero(~filled):
            known = [out[j] for j in neigh[i] if filled[j]]
            if known:
                new[i] = sum(known) / len(known)
                new_filled[i] = True
        if new_filled.sum() == filled.sum():
            # disconnected remainder: fall back to the mean of the filled nodes
            new[~filled] = out[filled].mean()
            new_filled[:] = True
        out, filled = new, new_filled
    return out


def train_default(data: FeatureMatrix, **overrides) -> SomMap:
    """Init + train with the default map size heuristic; keyword args override SomConfig."""
    if "rows" not in overrides or "cols" not in overrides:
        rows, cols = default_map_shape(data)
        overrides.setdefault("rows", rows)
        overrides.setdefault("cols", cols)
    config = SomConfig(**overrides)
    return train_batch(init_map(config, data), data)


def with_prototypes(som: SomMap, prototypes: np.ndarray) -> SomMap:
    return replace(som, prototypes=prototypes)
