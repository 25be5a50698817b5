"""Discrete speech units: k-means codebook, assignment and run-length transforms."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .features import FeatureSeq

log = logging.getLogger(__name__)

MAX_ITER = 300
TOL = 1e-6


@dataclass
class Codebook:
    centroids: np.ndarray  # (K, dim)
    seed: int = 0
    inertia_history: list = field(default_factory=list, compare=False)

    def __post_init__(self):
        c = np.asarray(self.centroids, dtype=np.float64)
        if c.ndim != 2 or c.shape[0] < 2:
            raise ValueError("codebook needs a (K, dim) centroid matrix with K >= 2")
        if not np.all(np.isfinite(c)):
            raise ValueError("centroids must be finite")
        if np.unique(c, axis=0).shape[0] != c.shape[0]:
            raise ValueError("centroids must be distinct")
        self.centroids = c

    @property
    def K(self) -> int:
        return self.centroids.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.centroids.shape[1]


@dataclass(frozen=True)
class ReducedUnits:
    units: np.ndarray
    durations: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.units, dtype=np.int64)
        d = np.asarray(self.durations, dtype=np.int64)
        if u.ndim != 1 or u.shape != d.shape:
            raise ValueError("units and durations must be equal-length 1-D sequences")
        if u.size > 1 and np.any(u[1:] == u[:-1]):
            raise ValueError("reduced units may not repeat consecutively")
        object.__setattr__(self, "units", u)
        object.__setattr__(self, "durations", d)

    def __len__(self):
        return self.units.shape[0]


def _stack(features) -> np.ndarray:
    mats = [f.vectors if isinstance(f, FeatureSeq) else np.asarray(f) for f in features]
    return np.concatenate(mats, axis=0).astype(np.float64, copy=False)


def _kmeans_pp(x, k, rng):
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = np.einsum("ij,ij->i", x - centers[0], x - centers[0])
    for j in range(1, k):
        total = d2.sum()
        if not total > 0:
            raise ValueError(f"only {j} distinct feature vectors; cannot seed {k} clusters")
        pick = rng.choice(n, p=d2 / total)
        centers[j] = x[pick]
        diff = x - centers[j]
        d2 = np.minimum(d2, np.einsum("ij,ij->i", diff, diff))
    return centers


def _update(x, labels, k, centers):
    sums = np.zeros_like(centers)
    # fixed-order accumulation keeps the reduction deterministic
    np.add.at(sums, labels, x)
    counts = np.bincount(labels, minlength=k)
    new = centers.copy()
    filled = counts > 0
    new[filled] = sums[filled] / counts[filled, None]
    return new, counts


def fit_kmeans(features, K: int = 100, seed: int = 0, max_iter: int = MAX_ITER, tol: float = TOL) -> Codebook:
    """Lloyd k-means with k-means++ seeding.

    Stops when no centroid moves more than ``tol`` or after ``max_iter``
    iterations. A cluster left empty is re-seeded at the point farthest from
    its assigned centroid.
    """
    x = _stack(features)
    if x.shape[0] < K:
        raise ValueError(f"{x.shape[0]} frames is fewer than K={K}")
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp(x, K, rng)
    labels, d2 = _kernels.nearest_centroid(x, centers)
    history = [float(d2.sum())]
    for it in range(max_iter):
        new, counts = _update(x, labels, K, centers)
        for j in np.flatnonzero(counts == 0):
            far = int(np.argmax(d2))
            new[j] = x[far]
            d2[far] = 0.0
        shift = float(np.max(np.linalg.norm(new - centers, axis=1)))
        centers = new
        labels, d2 = _kernels.nearest_centroid(x, centers)
        history.append(float(d2.sum()))
        if shift < tol:
            break
    log.debug("k-means K=%d converged after %d iterations, inertia %.4g", K, it + 1, history[-1])
    return Codebook(centers, seed, history)


def assign(f, c: Codebook) -> np.ndarray:
    """Nearest centroid per frame; ties go to the lowest index."""
    vectors = f.vectors if isinstance(f, FeatureSeq) else np.asarray(f, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[1] != c.feature_dim:
        raise ValueError(f"feature dim {vectors.shape[-1]} != codebook dim {c.feature_dim}")
    labels, _ = _kernels.nearest_centroid(vectors, c.centroids)
    return labels


def reduce(u) -> ReducedUnits:
    """Collapse runs of repeated units: [0,0,1,1,1,2] -> [0,1,2] with durations [2,3,1]."""
    u = np.asarray(u, dtype=np.int64)
    if u.ndim != 1 or u.size == 0:
        raise ValueError("cannot reduce an empty unit sequence")
    starts = np.flatnonzero(np.concatenate(([True], u[1:] != u[:-1])))
    durations = np.diff(np.concatenate((starts, [u.size])))
    return ReducedUnits(u[starts], durations)


def expand(r: ReducedUnits, durations=None) -> np.ndarray:
    """Repeat each unit by its duration (or by an explicit ``durations`` override)."""
    d = r.durations if durations is None else np.asarray(durations, dtype=np.int64)
    if d.shape != r.units.shape:
        raise ValueError("durations must match the number of units")
    if np.any(d < 1):
        raise ValueError("every duration must be at least 1 frame")
    return np.repeat(r.units, d)
