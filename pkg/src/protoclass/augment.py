"""Stochastic transformation families for contrastive views and for the
weak/strong pair used by consistency training.

Vector mode:
    contrastive:  Gaussian jitter + coordinate dropout
    weak:         small Gaussian jitter only
    strong:       jitter + coordinate dropout + per-sample uniform scaling

Tiny-image mode (square grayscale images, flattened row-major):
    weak:         integer shift (<= shift_max, zero fill) + horizontal flip
    strong:       weak ops + square cutout + pixel noise
    contrastive:  weak ops + square cutout + pixel noise (same recipe as
                  strong; crops/distortions play both roles for images)

Spatial ops (shift and flip) are enabled only when shift_max > 0, so an
all-zero config is the identity in both modes.

Determinism contract: the output is a pure function of (x, family, cfg,
seed).  The seeded draw order is fixed and documented per family so tests
can replay the stream:  (1) one standard_normal(dim) jitter draw, (2) one
permutation(dim) draw when the family masks coordinates and the mask count
is nonzero, (3) one uniform scale draw for the strong vector family.  The
tiny-image order is shift integers, flip coin, cutout corner, jitter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

FAMILIES = ("contrastive", "weak", "strong")


@dataclass
class AugmentConfig:
    mode: str = "vector"  # "vector" | "tiny_image"
    jitter_sigma_contrastive: float = 0.4
    jitter_sigma_weak: float = 0.05
    dropout_frac_contrastive: float = 0.125
    dropout_frac_strong: float = 0.25
    scale_range_strong: tuple[float, float] = (0.6, 1.4)
    shift_max: int = 2
    cutout_size: int = 4

    def __post_init__(self):
        if self.mode not in ("vector", "tiny_image"):
            raise ValueError(f"unknown augment mode {self.mode!r}")
        if self.jitter_sigma_contrastive < 0 or self.jitter_sigma_weak < 0:
            raise ValueError("jitter sigmas must be >= 0")
        for frac in (self.dropout_frac_contrastive, self.dropout_frac_strong):
            if not 0.0 <= frac < 1.0:
                raise ValueError("dropout fractions must be in [0, 1)")
        lo, hi = self.scale_range_strong
        if not 0.0 < lo <= hi:
            raise ValueError("scale_range_strong must satisfy 0 < lo <= hi")
        if self.shift_max < 0 or self.cutout_size < 0:
            raise ValueError("pixel counts must be >= 0")


def mask_count(frac: float, dim: int) -> int:
    """Exact number of coordinates zeroed: floor(frac * dim)."""
    return int(math.floor(frac * dim))


def _vector_transform(
    x: np.ndarray, family: str, cfg: AugmentConfig, rng: np.random.Generator
) -> np.ndarray:
    dim = x.shape[0]
    sigma = (
        cfg.jitter_sigma_weak if family == "weak" else cfg.jitter_sigma_contrastive
    )
    y = x + rng.standard_normal(dim) * sigma
    if family != "weak":
        frac = (
            cfg.dropout_frac_contrastive
            if family == "contrastive"
            else cfg.dropout_frac_strong
        )
        n_drop = mask_count(frac, dim)
        if n_drop > 0:
            y[rng.permutation(dim)[:n_drop]] = 0.0
    if family == "strong":
        lo, hi = cfg.scale_range_strong
        y *= rng.uniform(lo, hi)
    return y


def _shift2d(img: np.ndarray, dy: int, dx: int) -> np.ndarray:
    out = np.zeros_like(img)
    side = img.shape[0]
    ys = slice(max(dy, 0), side + min(dy, 0))
    xs = slice(max(dx, 0), side + min(dx, 0))
    ys_src = slice(max(-dy, 0), side + min(-dy, 0))
    xs_src = slice(max(-dx, 0), side + min(-dx, 0))
    out[ys, xs] = img[ys_src, xs_src]
    return out


def _image_transform(
    x: np.ndarray, family: str, cfg: AugmentConfig, rng: np.random.Generator
) -> np.ndarray:
    dim = x.shape[0]
    side = math.isqrt(dim)
    if side * side != dim:
        raise ValueError(f"tiny_image mode needs a square sample, got dim {dim}")
    img = x.reshape(side, side).copy()
    if cfg.shift_max > 0:
        dy, dx = rng.integers(-cfg.shift_max, cfg.shift_max + 1, size=2)
        img = _shift2d(img, int(dy), int(dx))
        if rng.integers(2):
            img = img[:, ::-1].copy()
    if family != "weak":
        size = min(cfg.cutout_size, side)
        if size > 0:
            top, left = rng.integers(0, side - size + 1, size=2)
            img[top : top + size, left : left + size] = 0.0
        sigma = cfg.jitter_sigma_contrastive
        img += rng.standard_normal(img.shape) * sigma
    return img.reshape(-1)


def transform(
    x: np.ndarray, family: str, cfg: AugmentConfig, seed: int
) -> np.ndarray:
    """Apply one stochastic transform; deterministic given (x, family, cfg, seed)."""
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}, expected one of {FAMILIES}")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"samples must be 1-D vectors, got shape {x.shape}")
    rng = np.random.default_rng(seed)
    if cfg.mode == "vector":
        return _vector_transform(x, family, cfg, rng)
    return _image_transform(x, family, cfg, rng)
