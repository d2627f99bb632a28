"""Datasets: synthetic generators, CSV ingestion, and the label-hiding store.

Ground-truth labels, when present, live only on :class:`SampleStore` as
``hidden_labels`` and are used exclusively by evaluation.  Training code
receives a :class:`TrainView`, which carries no label field at all.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

# warped_blobs layout: Gaussian blobs of unequal scale, each with a sparse
# wide "halo" (the same center at HALO_SCALE times the spread).  Class 0 is
# broad and far away; classes 1 and 2 are a close pair; further classes are
# ordinary blobs on a row behind the pair.  Splitting the broad blob in half
# buys spherical clustering 0.64 * BIG_STD^2 = 2.3 inertia per point, which
# strictly exceeds the 2 * (PAIR_GAP / 2)^2 = 1.28 cost of merging the close
# pair, so plain k-means in the raw space reliably breaks the true
# partition.  The halos leave blob cores (and hence centroid-neighbor
# prototypes) clean while giving neighbor-graph embeddings a graded fringe
# of hard points.
BIG_STD = 1.9  # isotropic spread of the broad class
BIG_ROW = -3.5  # broad-blob center on the cross axis
PAIR_STD = 0.32  # isotropic spread of each close-pair blob
PAIR_GAP = 1.6  # distance between the close-pair centers
PAIR_ROW = 1.9  # close-pair centers on the cross axis
EXTRA_STD = 0.5  # isotropic spread of classes beyond the first three
EXTRA_ROW = 5.3  # their row on the cross axis
EXTRA_SPACING = 3.2  # their spacing along the pair axis
HALO_FRAC = 0.1  # fraction of each class drawn at the halo scale
HALO_SCALE = 3.0  # halo spread multiplier
LINE_RADIUS = 3.5  # half-extent of the 1-D fallback layout
RING_GAP = 2.5  # latent radius step between consecutive annuli
RING_WIDTH = 0.15  # radial jitter of each annulus, relative to RING_GAP
WARP_GAIN = 2.0  # scale of the warp's affine argument; > 1 bends space
# within blobs instead of merely displacing them


@dataclass(frozen=True)
class TrainView:
    """Label-stripped view of a dataset handed to the training stages."""

    samples: np.ndarray
    name: str
    seed: int

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]


class SampleStore:
    """Unlabeled dataset with optional hidden evaluation labels."""

    def __init__(
        self,
        samples: np.ndarray,
        hidden_labels: np.ndarray | None = None,
        name: str = "",
        seed: int = 0,
    ):
        samples = np.asarray(samples, dtype=np.float64)
        if samples.ndim != 2:
            raise ValueError(f"samples must be 2-D, got shape {samples.shape}")
        if not np.isfinite(samples).all():
            raise ValueError("samples contain non-finite values")
        if hidden_labels is not None:
            hidden_labels = np.asarray(hidden_labels, dtype=np.int64)
            if hidden_labels.shape != (samples.shape[0],):
                raise ValueError("hidden_labels length must match sample count")
        self.samples = samples
        self.hidden_labels = hidden_labels
        self.name = name
        self.seed = seed

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    def train_view(self) -> TrainView:
        return TrainView(samples=self.samples, name=self.name, seed=self.seed)


@dataclass
class SynthConfig:
    kind: str = "warped_blobs"  # "warped_blobs" | "rings"
    classes: int = 4
    per_class: int = 250
    latent_dim: int = 2
    ambient_dim: int = 16
    warp_strength: float = 1.0
    noise_sigma: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("warped_blobs", "rings"):
            raise ValueError(f"unknown synthetic kind {self.kind!r}")
        if self.classes < 2:
            raise ValueError("classes must be >= 2")
        if self.per_class < 1:
            raise ValueError("per_class must be >= 1")
        if self.ambient_dim < self.latent_dim:
            raise ValueError("ambient_dim must be >= latent_dim")
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be >= 1")
        if self.warp_strength < 0 or self.noise_sigma < 0:
            raise ValueError("warp_strength and noise_sigma must be >= 0")


def _latent_points(
    cfg: SynthConfig, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Class-structured latent draws.

    warped_blobs: Gaussian blobs of unequal shape and scale in a seeded 2-D
    latent frame (see the layout constants above for why this defeats
    spherical clustering in the raw space).  latent_dim 1 falls back to
    isotropic blobs on a line.
    """
    k, m, d = cfg.classes, cfg.per_class, cfg.latent_dim
    labels = np.repeat(np.arange(k), m)
    if cfg.kind == "warped_blobs":
        if d == 1:
            centers = LINE_RADIUS * np.linspace(-1.0, 1.0, k)[:, None]
            return centers[labels] + rng.standard_normal((k * m, 1)), labels
        frame, _ = np.linalg.qr(rng.standard_normal((d, 2)))
        along, across = frame[:, 0], frame[:, 1]
        centers = np.zeros((k, d))
        sigmas = np.full(k, EXTRA_STD)
        centers[0] = BIG_ROW * across
        sigmas[0] = BIG_STD
        if k >= 2:
            centers[1] = -PAIR_GAP / 2.0 * along + PAIR_ROW * across
            sigmas[1] = PAIR_STD
        if k >= 3:
            centers[2] = PAIR_GAP / 2.0 * along + PAIR_ROW * across
            sigmas[2] = PAIR_STD
        if k >= 4:
            row = (np.arange(k - 3) - (k - 4) / 2.0) * EXTRA_SPACING
            centers[3:] = row[:, None] * along + EXTRA_ROW * across
        scale = np.ones(k * m)
        halo = int(round(HALO_FRAC * m))
        for c in range(k):  # first halo draws of each class block, shuffled later
            scale[c * m : c * m + halo] = HALO_SCALE
        points = centers[labels] + rng.standard_normal((k * m, d)) * (
            sigmas[labels] * scale
        )[:, None]
        return points, labels
    # rings: concentric annuli in the first two latent coordinates
    if d < 2:
        raise ValueError("rings need latent_dim >= 2")
    radii = RING_GAP * (labels + 1.0)
    theta = rng.uniform(0.0, 2.0 * math.pi, size=k * m)
    radial = radii + rng.standard_normal(k * m) * RING_WIDTH * RING_GAP
    points = rng.standard_normal((k * m, d)) * RING_WIDTH * RING_GAP
    points[:, 0] = radial * np.cos(theta)
    points[:, 1] = radial * np.sin(theta)
    return points, labels


def generate(cfg: SynthConfig) -> SampleStore:
    """Synthesize a labeled dataset; deterministic per seed.

    Latent class structure is zero-padded into the ambient space and pushed
    through a fixed seeded nonlinear map,

        y = pad(x) + warp_strength * tanh(pad(x) @ W1 + b1) @ W2,

    then isotropic Gaussian noise is added and rows are shuffled.  With
    warp_strength 0, noise 0 and latent_dim == ambient_dim the map is the
    identity.  Each phase (latent draw, warp parameters, noise, shuffle) uses
    its own spawned generator, so the latent structure for a seed does not
    depend on the ambient dimension.
    """
    latent_ss, warp_ss, noise_ss, shuffle_ss = np.random.SeedSequence(cfg.seed).spawn(4)
    latent, labels = _latent_points(cfg, np.random.default_rng(latent_ss))
    n, amb = latent.shape[0], cfg.ambient_dim

    padded = np.zeros((n, amb))
    padded[:, : cfg.latent_dim] = latent

    wrng = np.random.default_rng(warp_ss)
    w1 = wrng.standard_normal((amb, amb)) * WARP_GAIN / math.sqrt(amb)
    b1 = wrng.standard_normal(amb)
    w2 = wrng.standard_normal((amb, amb)) / math.sqrt(amb)
    samples = padded + cfg.warp_strength * np.tanh(padded @ w1 + b1) @ w2
    samples = samples + np.random.default_rng(noise_ss).standard_normal((n, amb)) * cfg.noise_sigma

    perm = np.random.default_rng(shuffle_ss).permutation(n)
    return SampleStore(
        samples=samples[perm],
        hidden_labels=labels[perm],
        name=f"{cfg.kind}-k{cfg.classes}-n{n}",
        seed=cfg.seed,
    )


# ---------------------------------------------------------------------------
# CSV ingestion / export
# ---------------------------------------------------------------------------


def ingest_csv(path: str | Path, has_labels: bool = False) -> SampleStore:
    """Parse a numeric CSV into a store; the label column is last when flagged."""
    path = Path(path)
    rows: list[list[float]] = []
    labels: list[int] = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            try:
                values = [float(f) for f in fields]
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            if has_labels:
                label = values[-1]
                if label != int(label):
                    raise ValueError(
                        f"{path}:{lineno}: label column must be an integer, got {label}"
                    )
                labels.append(int(label))
                values = values[:-1]
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise ValueError(
                    f"{path}:{lineno}: ragged row has {len(values)} values, expected {width}"
                )
            rows.append(values)
    if not rows:
        raise ValueError(f"{path}: no samples found")
    return SampleStore(
        samples=np.array(rows, dtype=np.float64),
        hidden_labels=np.array(labels, dtype=np.int64) if has_labels else None,
        name=path.stem,
    )


def export_csv(store: SampleStore, path: str | Path, include_labels: bool = False) -> None:
    """Write the store as CSV; %.17g keeps float64 round-trips exact."""
    path = Path(path)
    if include_labels and store.hidden_labels is None:
        raise ValueError("store has no labels to export")
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(store.n):
            cells = ["%.17g" % v for v in store.samples[i]]
            if include_labels:
                cells.append(str(int(store.hidden_labels[i])))
            fh.write(",".join(cells) + "\n")
