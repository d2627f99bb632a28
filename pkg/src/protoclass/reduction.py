"""Dimensionality reduction behind a pluggable interface.

Methods:

    spectral    Laplacian eigenmap on a symmetrized binary kNN graph.  The
                graph metric follows cfg.metric; the embedding is the
                eigenvectors of the normalized Laplacian for the out_dim
                smallest non-trivial eigenvalues.
    pca         Top principal directions of the centered data.
    identity    Column truncation / pass-through (testing and ablations).
    exact_tsne  Exact O(n^2) KL gradient descent, seeded; reference only.

Spectral and pca outputs are deterministic: every eigenvector / principal
direction is sign-fixed so that its first nonzero entry is positive.
min_dist is accepted for config compatibility but no shipped method uses it;
it is carried through to score tables for transparency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import cdist

METHODS = ("spectral", "exact_tsne", "pca", "identity")
METRICS = ("correlation", "cosine", "euclidean")

_SIGN_EPS = 1e-12


@dataclass
class EmbeddingSet:
    """High-dimensional representations and their low-dimensional projection."""

    h_high: np.ndarray
    z_low: np.ndarray | None = None

    def __post_init__(self):
        self.h_high = np.asarray(self.h_high, dtype=np.float64)
        if not np.isfinite(self.h_high).all():
            raise ValueError("embeddings contain non-finite values")
        if self.z_low is not None:
            self.z_low = np.asarray(self.z_low, dtype=np.float64)
            if self.z_low.shape[0] != self.h_high.shape[0]:
                raise ValueError("z_low row count must match h_high")


@dataclass
class DRConfig:
    method: str = "spectral"
    n_neighbors: int = 15
    out_dim: int = 2
    min_dist: float = 0.0
    metric: str = "euclidean"
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown DR method {self.method!r}")
        if self.metric not in METRICS:
            raise ValueError(f"unknown DR metric {self.metric!r}")
        if self.n_neighbors < 2:
            raise ValueError("n_neighbors must be >= 2")
        if self.out_dim < 1:
            raise ValueError("out_dim must be >= 1")
        if self.min_dist < 0:
            raise ValueError("min_dist must be >= 0")


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip each column so its first entry with |v| > 1e-12 is positive."""
    out = vectors.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        nz = np.nonzero(np.abs(col) > _SIGN_EPS)[0]
        if nz.size and col[nz[0]] < 0:
            out[:, j] = -col
    return out


def _knn_graph(h: np.ndarray, cfg: DRConfig) -> np.ndarray:
    d = cdist(h, h, metric=cfg.metric)
    np.fill_diagonal(d, np.inf)
    order = np.argsort(d, axis=1, kind="stable")[:, : cfg.n_neighbors]
    n = h.shape[0]
    adj = np.zeros((n, n), dtype=bool)
    adj[np.repeat(np.arange(n), cfg.n_neighbors), order.reshape(-1)] = True
    return adj | adj.T


def _null_space_basis(
    sqrt_deg: np.ndarray, comp_labels: np.ndarray, n_comp: int
) -> np.ndarray:
    """Canonical orthonormal basis of the normalized-Laplacian nullspace.

    The first vector is the global degree-weighted constant (the trivial
    direction); the rest come from Gram-Schmidt over per-component indicator
    vectors in component order.  This keeps disconnected graphs deterministic
    where the eigensolver's degenerate nullspace basis would be arbitrary.
    """
    n = sqrt_deg.size
    basis = np.empty((n, n_comp))
    basis[:, 0] = sqrt_deg / np.linalg.norm(sqrt_deg)
    col = 1
    for comp in range(n_comp - 1):
        v = np.where(comp_labels == comp, sqrt_deg, 0.0)
        v -= basis[:, :col] @ (basis[:, :col].T @ v)
        basis[:, col] = v / np.linalg.norm(v)
        col += 1
    return basis


def _spectral(h: np.ndarray, cfg: DRConfig) -> np.ndarray:
    n = h.shape[0]
    if n < cfg.n_neighbors + 1:
        raise ValueError(
            f"spectral embedding needs n >= n_neighbors + 1 ({cfg.n_neighbors + 1}), got {n}"
        )
    if n < cfg.out_dim + 1:
        raise ValueError("spectral embedding needs n >= out_dim + 1")
    graph = _knn_graph(h, cfg)
    n_comp, comp_labels = connected_components(csr_matrix(graph), directed=False)
    w = graph.astype(np.float64)
    sqrt_deg = np.sqrt(w.sum(axis=1))
    inv = 1.0 / sqrt_deg
    lap = np.eye(n) - inv[:, None] * w * inv[None, :]
    try:
        _, vectors = np.linalg.eigh(lap)
    except np.linalg.LinAlgError as exc:
        raise ValueError(
            f"eigen-solver failed on the neighbor graph "
            f"({n_comp} connected components): {exc}"
        ) from None
    if n_comp > 1:
        # the nullspace has multiplicity n_comp and eigh's basis for it is
        # arbitrary; substitute the canonical one (trivial direction first)
        vectors = vectors.copy()
        vectors[:, :n_comp] = _null_space_basis(sqrt_deg, comp_labels, n_comp)
    return _fix_signs(vectors[:, 1 : 1 + cfg.out_dim])


def _pca(h: np.ndarray, cfg: DRConfig) -> np.ndarray:
    if cfg.out_dim >= h.shape[1]:
        raise ValueError(
            f"pca out_dim {cfg.out_dim} must be < input dim {h.shape[1]}"
        )
    centered = h - h.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    components = _fix_signs(vt[: cfg.out_dim].T).T  # sign rule on direction vectors
    return centered @ components.T


def _identity(h: np.ndarray, cfg: DRConfig) -> np.ndarray:
    if cfg.out_dim > h.shape[1]:
        raise ValueError(
            f"identity out_dim {cfg.out_dim} exceeds input dim {h.shape[1]}"
        )
    return h[:, : cfg.out_dim].copy()


def _tsne_affinities(h: np.ndarray, cfg: DRConfig) -> np.ndarray:
    """Symmetrized conditional Gaussians at a perplexity of n_neighbors."""
    n = h.shape[0]
    d2 = cdist(h, h, metric=cfg.metric) ** 2
    perplexity = min(float(cfg.n_neighbors), (n - 1) / 3.0)
    target_entropy = math.log(max(perplexity, 2.0))
    p = np.zeros((n, n))
    for i in range(n):
        row = np.delete(d2[i], i)
        lo, hi = 1e-12, 1e12
        beta = 1.0
        for _ in range(64):
            num = np.exp(-row * beta)
            total = num.sum()
            if total <= 0:
                beta = lo = lo / 2
                continue
            cond = num / total
            nz = cond > 0
            entropy = -(cond[nz] * np.log(cond[nz])).sum()
            if abs(entropy - target_entropy) < 1e-7:
                break
            if entropy > target_entropy:
                lo = beta
                beta = beta * 2 if hi >= 1e12 else (beta + hi) / 2
            else:
                hi = beta
                beta = beta / 2 if lo <= 1e-12 else (beta + lo) / 2
        cond = np.exp(-row * beta)
        cond /= max(cond.sum(), 1e-300)
        p[i, np.arange(n) != i] = cond
    p = (p + p.T) / (2.0 * n)
    return np.maximum(p, 1e-12)


def _exact_tsne(h: np.ndarray, cfg: DRConfig) -> np.ndarray:
    n = h.shape[0]
    p = _tsne_affinities(h, cfg)
    rng = np.random.default_rng(cfg.seed)
    y = rng.standard_normal((n, cfg.out_dim)) * 1e-4
    velocity = np.zeros_like(y)
    lr = max(n / 12.0, 50.0)
    exaggeration_until = 100
    iters = 400
    p_run = p * 12.0
    for it in range(iters):
        if it == exaggeration_until:
            p_run = p
        diff = y[:, None, :] - y[None, :, :]
        num = 1.0 / (1.0 + (diff**2).sum(axis=2))
        np.fill_diagonal(num, 0.0)
        q = np.maximum(num / num.sum(), 1e-12)
        coeff = (p_run - q) * num
        grad = 4.0 * (np.diag(coeff.sum(axis=1)) - coeff) @ y
        momentum = 0.5 if it < exaggeration_until else 0.8
        velocity = momentum * velocity - lr * grad
        y = y + velocity
        y = y - y.mean(axis=0)
    return y


_DISPATCH = {
    "spectral": _spectral,
    "pca": _pca,
    "identity": _identity,
    "exact_tsne": _exact_tsne,
}


def project_array(h: np.ndarray, cfg: DRConfig) -> np.ndarray:
    h = np.asarray(h, dtype=np.float64)
    return _DISPATCH[cfg.method](h, cfg)


def project(emb: EmbeddingSet, cfg: DRConfig) -> EmbeddingSet:
    """Fill z_low (n x out_dim) from h_high using the configured method."""
    return EmbeddingSet(h_high=emb.h_high, z_low=project_array(emb.h_high, cfg))
