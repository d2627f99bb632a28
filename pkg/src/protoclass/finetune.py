"""Stage 3: prototype-based semi-supervised fine-tuning.

Every step combines a supervised cross-entropy on weakly augmented
prototypes (pseudo-labeled by their cluster id) with a confidence-masked
consistency term on unlabeled data: the hard prediction on a weak view
becomes the target for the strong view whenever the weak confidence clears
the threshold.  The weak branch is a stop-gradient: only the strong logits
receive a consistency gradient.

    total = proto_loss + unlabeled_weight * consistency_loss

Only the encoder and the (freshly initialized) classification head train;
the projection head stays frozen.  The EMA shadow updates after every step
and backs inference when requested.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .augment import AugmentConfig, transform
from .data import TrainView
from .net import (
    Matrix,
    ParamSet,
    classifier_backward,
    ema_params,
    ema_update,
    encoder_backward,
    forward_classifier,
    forward_encoder,
    fresh_cls_head,
    make_optimizer,
    reset_ema,
    sgd_step,
    softmax,
    softmax_backward,
)
from .prototypes import PrototypeSet
from .seeding import derive_seed, rng_for

_EPOCH_TAG = 41
_HEAD_TAG = 42


@dataclass
class SftConfig:
    batch_size: int = 64
    unlabeled_ratio: int = 7
    unlabeled_weight: float = 1.0
    confidence_threshold: float = 0.95
    epochs: int = 30
    learning_rate: float = 0.03
    momentum: float = 0.9
    weight_decay: float = 0.0  # L2 coefficient; published recipes use ~5e-4
    ema_decay: float = 0.999
    cosine_schedule: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.unlabeled_ratio < 1:
            raise ValueError("batch_size and unlabeled_ratio must be >= 1")
        if self.unlabeled_weight < 0:
            raise ValueError("unlabeled_weight must be >= 0")
        if not 0.0 < self.confidence_threshold <= 1.0:
            raise ValueError("confidence_threshold must be in (0, 1]")
        if not 0.0 <= self.ema_decay <= 1.0:
            raise ValueError("ema_decay must be in [0, 1]")


@dataclass
class UnlabeledBatchOutput:
    q_weak: Matrix
    q_strong: Matrix
    hard_targets: np.ndarray  # argmax of each weak row
    mask: np.ndarray  # 1.0 where max weak confidence >= threshold


def confidence_masked_batch(
    q_weak: Matrix, q_strong: Matrix, threshold: float
) -> UnlabeledBatchOutput:
    q_weak = np.asarray(q_weak, dtype=np.float64)
    q_strong = np.asarray(q_strong, dtype=np.float64)
    if q_weak.shape != q_strong.shape:
        raise ValueError("weak and strong probability shapes must match")
    targets = q_weak.argmax(axis=1)
    mask = (q_weak.max(axis=1) >= threshold).astype(np.float64)
    return UnlabeledBatchOutput(
        q_weak=q_weak, q_strong=q_strong, hard_targets=targets, mask=mask
    )


def proto_loss(q: Matrix, labels: np.ndarray) -> tuple[float, Matrix]:
    """Mean cross-entropy of probability rows against pseudo-labels.

    Returns the loss and its gradient with respect to q.
    """
    q = np.asarray(q, dtype=np.float64)
    labels = np.asarray(labels)
    n, k = q.shape
    if labels.shape != (n,):
        raise ValueError(f"labels must have shape ({n},)")
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"pseudo-label out of range [0, {k})")
    picked = q[np.arange(n), labels]
    loss = float(-np.log(picked).mean())
    grad = np.zeros_like(q)
    grad[np.arange(n), labels] = -1.0 / (n * picked)
    return loss, grad


def consistency_loss(out: UnlabeledBatchOutput) -> tuple[float, Matrix]:
    """Confidence-masked cross-entropy of strong rows against weak hard targets.

    Normalized by the full batch size (masked rows contribute 0).  The
    returned gradient is with respect to the strong-branch logits only; no
    gradient flows into the weak branch.
    """
    q_s = out.q_strong
    n, _ = q_s.shape
    rows = np.arange(n)
    active = out.mask > 0
    per_row = np.zeros(n)
    per_row[active] = -np.log(q_s[active, out.hard_targets[active]])
    loss = float(per_row.sum() / n)
    grad_logits = q_s.copy()
    grad_logits[rows, out.hard_targets] -= 1.0
    grad_logits *= out.mask[:, None] / n
    return loss, grad_logits


def sft_step_losses(
    params: ParamSet,
    proto_views: Matrix,
    proto_labels: np.ndarray,
    weak_views: Matrix,
    strong_views: Matrix,
    cfg: SftConfig,
    seeds: tuple[int, int, int] = (0, 1, 2),
    train_mode: bool = True,
) -> tuple[tuple[float, float, float], dict[str, np.ndarray], UnlabeledBatchOutput]:
    """One step's losses and parameter gradients (encoder + classifier only).

    Pure given inputs and dropout seeds; run_sft folds this into SGD.
    """
    s_proto, s_weak, s_strong = seeds

    h_p, enc_cache_p = forward_encoder(params, proto_views, train_mode, s_proto)
    logits_p, cls_cache_p = forward_classifier(params, h_p, train_mode, s_proto)
    q_p = softmax(logits_p)
    loss_proto, grad_q = proto_loss(q_p, proto_labels)
    grad_logits_p = softmax_backward(q_p, grad_q)

    h_w, _ = forward_encoder(params, weak_views, train_mode, s_weak)
    logits_w, _ = forward_classifier(params, h_w, train_mode, s_weak)
    q_w = softmax(logits_w)

    h_s, enc_cache_s = forward_encoder(params, strong_views, train_mode, s_strong)
    logits_s, cls_cache_s = forward_classifier(params, h_s, train_mode, s_strong)
    q_s = softmax(logits_s)

    out = confidence_masked_batch(q_w, q_s, cfg.confidence_threshold)
    loss_consi, grad_logits_s = consistency_loss(out)
    total = loss_proto + cfg.unlabeled_weight * loss_consi

    cls_grads, grad_h_p = classifier_backward(params, cls_cache_p, grad_logits_p)
    enc_grads, _ = encoder_backward(params, enc_cache_p, grad_h_p)
    cls_grads_s, grad_h_s = classifier_backward(
        params, cls_cache_s, cfg.unlabeled_weight * grad_logits_s
    )
    enc_grads_s, _ = encoder_backward(params, enc_cache_s, grad_h_s)
    grads = {
        name: cls_grads[name] + cls_grads_s[name] for name in cls_grads
    }
    grads.update(
        {name: enc_grads[name] + enc_grads_s[name] for name in enc_grads}
    )
    return (loss_proto, loss_consi, total), grads, out


def run_sft(
    view: TrainView,
    protos: PrototypeSet,
    params: ParamSet,
    cfg: SftConfig,
    aug: AugmentConfig,
) -> tuple[ParamSet, list[tuple[float, float, float]]]:
    """Fine-tune in place; returns per-epoch (proto, consistency, total) means.

    Prototypes draw with replacement only when fewer than batch_size exist;
    the classification head is re-initialized (seeded) at the start and the
    EMA shadow resets to the live weights before the first step.
    """
    if protos.indices.size == 0:
        raise ValueError("prototype set is empty")
    x = view.samples
    n = x.shape[0]
    fresh_cls_head(params, derive_seed(cfg.seed, _HEAD_TAG))
    params.ema_decay = cfg.ema_decay
    reset_ema(params)

    proto_x = x[protos.indices]
    proto_y = protos.pseudo_labels
    batch = cfg.batch_size
    unlab = cfg.unlabeled_ratio * cfg.batch_size
    steps_per_epoch = max(1, math.ceil(n / unlab))
    opt = make_optimizer(
        params,
        cfg.learning_rate,
        cfg.momentum,
        schedule="cosine" if cfg.cosine_schedule else "constant",
        total_steps=max(1, cfg.epochs * steps_per_epoch),
        weight_decay=cfg.weight_decay,
    )
    traces: list[tuple[float, float, float]] = []
    step = 0
    for epoch in range(cfg.epochs):
        erng = rng_for(cfg.seed, _EPOCH_TAG, epoch)
        sums = np.zeros(3)
        for _ in range(steps_per_epoch):
            p_idx = erng.choice(
                proto_x.shape[0], size=batch, replace=proto_x.shape[0] < batch
            )
            u_idx = erng.choice(n, size=unlab, replace=n < unlab)
            p_seeds = erng.integers(0, 2**63, size=batch)
            w_seeds = erng.integers(0, 2**63, size=unlab)
            s_seeds = erng.integers(0, 2**63, size=unlab)
            drop_seeds = tuple(int(s) for s in erng.integers(0, 2**63, size=3))

            proto_views = np.stack(
                [transform(proto_x[j], "weak", aug, int(s)) for j, s in zip(p_idx, p_seeds)]
            )
            weak_views = np.stack(
                [transform(x[j], "weak", aug, int(s)) for j, s in zip(u_idx, w_seeds)]
            )
            strong_views = np.stack(
                [transform(x[j], "strong", aug, int(s)) for j, s in zip(u_idx, s_seeds)]
            )
            losses, grads, _ = sft_step_losses(
                params,
                proto_views,
                proto_y[p_idx],
                weak_views,
                strong_views,
                cfg,
                seeds=drop_seeds,
            )
            sgd_step(params, grads, opt, step)
            ema_update(params)
            step += 1
            sums += losses
        traces.append(tuple(sums / steps_per_epoch))
    return params, traces


def predict(data, params: ParamSet, use_ema: bool = False) -> np.ndarray:
    """Deterministic eval-mode class index per sample (ties: lowest index)."""
    x = data.samples if hasattr(data, "samples") else np.asarray(data, dtype=np.float64)
    p = ema_params(params) if use_ema else params
    h, _ = forward_encoder(p, x, train_mode=False)
    logits, _ = forward_classifier(p, h, train_mode=False)
    return logits.argmax(axis=1)
