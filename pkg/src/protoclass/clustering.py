"""k-means with k-means++ seeding, plus the silhouette score.

Determinism rules: point-to-centroid ties break toward the lowest centroid
index, an empty cluster is reseeded with the point farthest from its
assigned centroid, and restart winners are chosen by lowest inertia with
ties kept at the earlier restart.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .seeding import derive_seed

MAX_LLOYD_ITERS = 300
REL_TOL = 1e-6


@dataclass
class ClusterModel:
    centroids: np.ndarray  # (k, dim)
    assignments: np.ndarray  # (n,) cluster index per sample
    inertia: float  # sum of squared distances to assigned centroids


def _sq_dists(z: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    return cdist(z, centroids, metric="sqeuclidean")


def _kmeans_pp(z: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = z.shape[0]
    centroids = np.empty((k, z.shape[1]))
    centroids[0] = z[rng.integers(n)]
    closest = ((z - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))  # all mass on duplicates; pick uniformly
        else:
            r = rng.uniform(0.0, total)
            idx = int(np.searchsorted(np.cumsum(closest), r, side="right"))
            idx = min(idx, n - 1)
        centroids[j] = z[idx]
        closest = np.minimum(closest, ((z - centroids[j]) ** 2).sum(axis=1))
    return centroids


def _assign(z: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d2 = _sq_dists(z, centroids)
    assign = d2.argmin(axis=1)  # argmin takes the lowest index on ties
    return assign, d2


def _fill_empty(
    z: np.ndarray, centroids: np.ndarray, assign: np.ndarray, d2: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Reseed each empty cluster with the point farthest from its centroid."""
    k = centroids.shape[0]
    for c in range(k):
        if (assign == c).any():
            continue
        own = d2[np.arange(len(assign)), assign]
        far = int(own.argmax())
        centroids[c] = z[far]
        assign, d2 = _assign(z, centroids)
    return assign, d2


def _lloyd(z: np.ndarray, k: int, rng: np.random.Generator) -> ClusterModel:
    centroids = _kmeans_pp(z, k, rng)
    prev_inertia = np.inf
    assign, d2 = _assign(z, centroids)
    for _ in range(MAX_LLOYD_ITERS):
        assign, d2 = _fill_empty(z, centroids, assign, d2)
        inertia = float(d2[np.arange(len(assign)), assign].sum())
        assert inertia <= prev_inertia + 1e-9, "inertia increased within a restart"
        if prev_inertia < np.inf:
            if prev_inertia == 0.0 or (prev_inertia - inertia) < REL_TOL * prev_inertia:
                break
        prev_inertia = inertia
        for c in range(k):
            members = assign == c
            if members.any():  # a still-empty cluster keeps its centroid
                centroids[c] = z[members].mean(axis=0)
        assign, d2 = _assign(z, centroids)
    assign, d2 = _fill_empty(z, centroids, assign, d2)
    inertia = float(d2[np.arange(len(assign)), assign].sum())
    return ClusterModel(centroids=centroids, assignments=assign, inertia=inertia)


def kmeans(z: np.ndarray, k_part: int, restarts: int = 10, seed: int = 0) -> ClusterModel:
    """Best-of-restarts Lloyd iterations with k-means++ seeding."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2:
        raise ValueError("points must be 2-D")
    n = z.shape[0]
    if k_part < 1 or k_part > n:
        raise ValueError(f"k_part must be in [1, {n}], got {k_part}")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    best: ClusterModel | None = None
    for r in range(restarts):
        rng = np.random.default_rng(derive_seed(seed, 21, r))
        model = _lloyd(z, k_part, rng)
        if best is None or model.inertia < best.inertia:
            best = model
    return best


def silhouette(z: np.ndarray, assignments: np.ndarray) -> float:
    """Mean silhouette score over all samples, Euclidean distances.

    Per sample, s = (y - x) / max(x, y) with x the mean distance to the
    other members of its own cluster and y the smallest mean distance to
    another cluster.  Members of singleton clusters score 0 by convention,
    as do samples where max(x, y) == 0.
    """
    z = np.asarray(z, dtype=np.float64)
    assignments = np.asarray(assignments)
    labels = np.unique(assignments)
    if labels.size < 2:
        raise ValueError("silhouette is undefined for fewer than 2 clusters")
    d = cdist(z, z)
    n = z.shape[0]
    members = {c: np.nonzero(assignments == c)[0] for c in labels}
    scores = np.zeros(n)
    for i in range(n):
        own = members[assignments[i]]
        if own.size <= 1:
            continue  # singleton: s = 0
        x = d[i, own].sum() / (own.size - 1)  # exclude self (distance 0)
        y = min(
            d[i, members[c]].mean() for c in labels if c != assignments[i]
        )
        denom = max(x, y)
        if denom > 0:
            scores[i] = (y - x) / denom
    return float(scores.mean())
