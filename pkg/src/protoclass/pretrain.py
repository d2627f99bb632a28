"""Stage 1: contrastive self-supervised pre-training.

Each sample in a batch yields two stochastic views; the encoder and the
normalized projection head map them to unit vectors, and the batch is scored
with the normalized temperature-scaled cross-entropy: for anchor i with
positive pair p(i) among 2B rows,

    loss_i = -log( exp(sim(z_i, z_p(i)) / tau)
                   / sum_{k != i} exp(sim(z_i, z_k) / tau) )

with sim the dot product of unit rows, averaged over all 2B anchors.  The
gradient flows through numerator and denominator for every anchor, computed
in one pass over the 2B x 2B similarity matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .augment import AugmentConfig, transform
from .data import TrainView
from .net import (
    Matrix,
    ParamSet,
    encoder_backward,
    forward_encoder,
    forward_projection,
    make_optimizer,
    projection_backward,
    sgd_step,
)
from .seeding import rng_for

_EPOCH_TAG = 11
UNIT_ROW_TOL = 1e-6


@dataclass
class CptConfig:
    temperature: float = 0.1
    batch_size: int = 128
    epochs: int = 60
    learning_rate: float = 0.3
    momentum: float = 0.9
    schedule: str = "constant"
    seed: int = 0

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


def interleave_views(view_a: Matrix, view_b: Matrix) -> Matrix:
    """Stack two view matrices so rows (2m, 2m+1) are the views of sample m."""
    b, d = view_a.shape
    out = np.empty((2 * b, d))
    out[0::2] = view_a
    out[1::2] = view_b
    return out


def ntxent_loss(z: Matrix, tau: float) -> tuple[float, Matrix]:
    """Contrastive loss over interleaved unit rows, plus its gradient in z.

    Rows must be unit length to within 1e-6; rows (2m, 2m+1) are positives.
    Returns (mean anchor loss, dL/dz).
    """
    z = np.asarray(z, dtype=np.float64)
    if tau <= 0:
        raise ValueError("tau must be > 0")
    n = z.shape[0]
    if n < 2 or n % 2 != 0:
        raise ValueError(f"batch must hold an even number >= 2 of rows, got {n}")
    norms = np.linalg.norm(z, axis=1)
    if np.abs(norms - 1.0).max() > UNIT_ROW_TOL:
        raise ValueError("contrastive batch rows must be unit length (within 1e-6)")

    sims = (z @ z.T) / tau
    np.fill_diagonal(sims, -np.inf)
    row_max = sims.max(axis=1)
    lse = row_max + np.log(np.exp(sims - row_max[:, None]).sum(axis=1))
    pos = np.arange(n) ^ 1  # pair index: 2m <-> 2m+1
    loss = float((lse - sims[np.arange(n), pos]).mean())

    # dL/dsims = (softmax over k != i - onehot at the positive) / n
    atten = np.exp(sims - lse[:, None])  # diagonal underflows to exactly 0
    atten[np.arange(n), pos] -= 1.0
    atten /= n
    grad_z = (atten + atten.T) @ z / tau
    return loss, grad_z


def run_cpt(
    view: TrainView,
    params: ParamSet,
    cfg: CptConfig,
    aug: AugmentConfig,
) -> tuple[ParamSet, list[float]]:
    """Train encoder + projection head in place; returns per-epoch mean losses.

    Each epoch shuffles the data, draws two contrastive views per sample, and
    takes one SGD step per batch.  The last partial batch is dropped.
    """
    x = view.samples
    n = x.shape[0]
    if n == 0:
        raise ValueError("dataset is empty")
    if cfg.batch_size > n:
        raise ValueError(
            f"batch_size {cfg.batch_size} exceeds dataset size {n}"
        )
    steps_per_epoch = n // cfg.batch_size
    opt = make_optimizer(
        params,
        cfg.learning_rate,
        cfg.momentum,
        schedule=cfg.schedule,
        total_steps=max(1, cfg.epochs * steps_per_epoch),
    )
    trace: list[float] = []
    step = 0
    for epoch in range(cfg.epochs):
        erng = rng_for(cfg.seed, _EPOCH_TAG, epoch)
        order = erng.permutation(n)
        losses = []
        for b in range(steps_per_epoch):
            idx = order[b * cfg.batch_size : (b + 1) * cfg.batch_size]
            view_seeds = erng.integers(0, 2**63, size=(len(idx), 2))
            drop_seed = int(erng.integers(0, 2**63))
            va = np.stack(
                [transform(x[i], "contrastive", aug, int(s)) for i, s in zip(idx, view_seeds[:, 0])]
            )
            vb = np.stack(
                [transform(x[i], "contrastive", aug, int(s)) for i, s in zip(idx, view_seeds[:, 1])]
            )
            batch = interleave_views(va, vb)

            h, enc_cache = forward_encoder(params, batch, train_mode=True, rng_seed=drop_seed)
            z, proj_cache = forward_projection(params, h, train_mode=True, rng_seed=drop_seed)
            loss, grad_z = ntxent_loss(z, cfg.temperature)
            proj_grads, grad_h = projection_backward(params, proj_cache, grad_z)
            enc_grads, _ = encoder_backward(params, enc_cache, grad_h)
            sgd_step(params, {**enc_grads, **proj_grads}, opt, step)
            step += 1
            losses.append(loss)
        trace.append(float(np.mean(losses)) if losses else float("nan"))
    return params, trace
