"""Stage 2: centroid-neighbor prototype sampling.

Embeds the data with the frozen encoder, reduces dimension, clusters with
k-means, scores candidate reduction configs by silhouette (label-free), and
samples each cluster's nearest members to the centroid as prototypes whose
pseudo-label is the cluster id.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clustering import ClusterModel, kmeans, silhouette
from .data import TrainView
from .net import ParamSet, forward_encoder
from .reduction import DRConfig, EmbeddingSet, project
from .seeding import derive_seed


@dataclass
class PrototypeSet:
    indices: np.ndarray  # unique sample indices into the dataset
    pseudo_labels: np.ndarray  # cluster id per selected index
    n_total: int  # requested prototype count


def embed_all(view: TrainView, params: ParamSet | None) -> EmbeddingSet:
    """Eval-mode encoder output per sample; raw samples when params is None."""
    if params is None:
        return EmbeddingSet(h_high=view.samples.copy())
    h, _ = forward_encoder(params, view.samples, train_mode=False)
    return EmbeddingSet(h_high=h)


def sweep_silhouette(
    emb: EmbeddingSet,
    grid: list[DRConfig],
    k_part: int,
    seed: int = 0,
    restarts: int = 10,
) -> tuple[DRConfig, list[dict]]:
    """Project/cluster/score each config; returns (argmax config, score table).

    Ties keep the earliest grid entry.  Uses no ground-truth labels.
    """
    if not grid:
        raise ValueError("silhouette sweep needs a non-empty grid")
    table = []
    best_idx = 0
    for i, cfg in enumerate(grid):
        projected = project(emb, cfg)
        model = kmeans(
            projected.z_low, k_part, restarts=restarts, seed=derive_seed(seed, 31, i)
        )
        score = silhouette(projected.z_low, model.assignments)
        table.append(
            {
                "method": cfg.method,
                "n_neighbors": cfg.n_neighbors,
                "out_dim": cfg.out_dim,
                "min_dist": cfg.min_dist,
                "metric": cfg.metric,
                "silhouette": score,
            }
        )
        if score > table[best_idx]["silhouette"]:
            best_idx = i
    return grid[best_idx], table


def _cluster_quotas(sizes: np.ndarray, n_proto: int) -> np.ndarray:
    """Per-cluster quotas: floor split, remainder to the largest clusters
    first (ties toward the lower id), then capped at cluster size with any
    shortfall redistributed to clusters that still have spare members so the
    total equals min(n_proto, n)."""
    k = sizes.size
    quotas = np.full(k, n_proto // k)
    remainder = n_proto - quotas.sum()
    by_size = sorted(range(k), key=lambda c: (-sizes[c], c))
    for c in by_size[:remainder]:
        quotas[c] += 1
    quotas = np.minimum(quotas, sizes)
    target = min(n_proto, int(sizes.sum()))
    while quotas.sum() < target:
        spare = sizes - quotas
        c = min(
            (c for c in range(k) if spare[c] > 0),
            key=lambda c: (-sizes[c], c),
        )
        quotas[c] += 1
    return quotas


def sample_prototypes(
    z: np.ndarray, model: ClusterModel, n_proto: int
) -> PrototypeSet:
    """Quota-nearest members of each cluster centroid, by Euclidean distance
    in the projected space; distance ties break toward the lower sample index."""
    z = np.asarray(z, dtype=np.float64)
    k = model.centroids.shape[0]
    if n_proto < k:
        raise ValueError(f"n_proto {n_proto} must be >= number of clusters {k}")
    sizes = np.array([(model.assignments == c).sum() for c in range(k)])
    quotas = _cluster_quotas(sizes, n_proto)
    indices: list[int] = []
    labels: list[int] = []
    for c in range(k):
        members = np.nonzero(model.assignments == c)[0]
        if members.size == 0:
            continue
        dist = np.linalg.norm(z[members] - model.centroids[c], axis=1)
        order = np.lexsort((members, dist))  # sort by (distance, sample index)
        chosen = members[order[: quotas[c]]]
        indices.extend(int(i) for i in chosen)
        labels.extend([c] * len(chosen))
    return PrototypeSet(
        indices=np.array(indices, dtype=np.int64),
        pseudo_labels=np.array(labels, dtype=np.int64),
        n_total=n_proto,
    )
