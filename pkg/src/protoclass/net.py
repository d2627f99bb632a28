"""Dense-network numerics: a small MLP with hand-derived backprop.

The network is fixed-topology (encoder trunk, projection head, classification
head), so each layer type carries an explicit forward and backward instead of
a general autodiff graph:

    encoder layer:    affine -> ReLU -> dropout
    projection head:  affine -> ReLU -> dropout -> affine -> row L2-normalize
    classification:   affine -> ReLU -> dropout -> affine  (logits)

All math is float64.  Dropout is the classic (non-inverted) form: in train
mode activations are multiplied by a seeded Bernoulli keep-mask, in eval mode
they are scaled by the keep probability, so eval is deterministic.  Masks
depend only on (seed, branch, layer index, shape), never on values, which
keeps seeded forwards differentiable for finite-difference checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .seeding import rng_for

Matrix = np.ndarray

# rng stream tags so the three branches never share dropout masks
_ENC_TAG = 1
_PROJ_TAG = 2
_CLS_TAG = 3


@dataclass
class LayerParams:
    """One affine layer: weight (fan_in, fan_out) and bias (fan_out,)."""

    weight: Matrix
    bias: np.ndarray


@dataclass
class ParamSet:
    """All trainable tensors plus their EMA shadow.

    ``ema_shadow`` maps tensor names (as produced by :func:`named_tensors`)
    to same-shaped arrays; it starts as a copy of the live tensors so every
    shadow entry is always a convex combination of historical live values.
    """

    encoder: list[LayerParams]
    proj_head: list[LayerParams]
    cls_head: list[LayerParams]
    ema_shadow: dict[str, np.ndarray]
    ema_decay: float = 0.999
    encoder_dropout: float = 0.0
    head_dropout: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.ema_decay <= 1.0:
            raise ValueError(f"ema_decay must be in [0, 1], got {self.ema_decay}")


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> LayerParams:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
    return LayerParams(weight=w, bias=np.zeros(fan_out))


def init_params(
    in_dim: int,
    encoder_widths: list[int],
    proj_hidden: int,
    proj_dim: int,
    cls_hidden: int,
    n_classes: int,
    seed: int = 0,
    ema_decay: float = 0.999,
    encoder_dropout: float = 0.0,
    head_dropout: float = 0.1,
) -> ParamSet:
    """Seeded uniform(+-sqrt(6/(fan_in+fan_out))) weights, zero biases."""
    rng = rng_for(seed, 0)
    widths = [in_dim, *encoder_widths]
    encoder = [_glorot(rng, widths[i], widths[i + 1]) for i in range(len(widths) - 1)]
    h_dim = widths[-1]
    proj = [_glorot(rng, h_dim, proj_hidden), _glorot(rng, proj_hidden, proj_dim)]
    cls = [_glorot(rng, h_dim, cls_hidden), _glorot(rng, cls_hidden, n_classes)]
    params = ParamSet(
        encoder=encoder,
        proj_head=proj,
        cls_head=cls,
        ema_shadow={},
        ema_decay=ema_decay,
        encoder_dropout=encoder_dropout,
        head_dropout=head_dropout,
    )
    reset_ema(params)
    return params


def named_tensors(params: ParamSet) -> list[tuple[str, np.ndarray]]:
    """Live tensors in a fixed, documented order."""
    out = []
    for group, layers in (
        ("encoder", params.encoder),
        ("proj", params.proj_head),
        ("cls", params.cls_head),
    ):
        for i, layer in enumerate(layers):
            out.append((f"{group}.{i}.weight", layer.weight))
            out.append((f"{group}.{i}.bias", layer.bias))
    return out


def fresh_cls_head(params: ParamSet, seed: int) -> None:
    """Re-initialize the classification head in place (seeded)."""
    rng = rng_for(seed, 0)
    layers = []
    for layer in params.cls_head:
        fan_in, fan_out = layer.weight.shape
        layers.append(_glorot(rng, fan_in, fan_out))
    params.cls_head = layers
    for i, layer in enumerate(params.cls_head):
        params.ema_shadow[f"cls.{i}.weight"] = layer.weight.copy()
        params.ema_shadow[f"cls.{i}.bias"] = layer.bias.copy()


def reset_ema(params: ParamSet) -> None:
    params.ema_shadow = {name: t.copy() for name, t in named_tensors(params)}


def ema_update(params: ParamSet) -> None:
    """shadow <- decay * shadow + (1 - decay) * live, every tensor."""
    d = params.ema_decay
    for name, t in named_tensors(params):
        s = params.ema_shadow[name]
        s *= d
        s += (1.0 - d) * t


def ema_params(params: ParamSet) -> ParamSet:
    """A ParamSet whose live tensors are copies of the EMA shadow."""

    def group(prefix: str, layers: list[LayerParams]) -> list[LayerParams]:
        return [
            LayerParams(
                weight=params.ema_shadow[f"{prefix}.{i}.weight"].copy(),
                bias=params.ema_shadow[f"{prefix}.{i}.bias"].copy(),
            )
            for i in range(len(layers))
        ]

    shadow = ParamSet(
        encoder=group("encoder", params.encoder),
        proj_head=group("proj", params.proj_head),
        cls_head=group("cls", params.cls_head),
        ema_shadow={},
        ema_decay=params.ema_decay,
        encoder_dropout=params.encoder_dropout,
        head_dropout=params.head_dropout,
    )
    reset_ema(shadow)
    return shadow


# ---------------------------------------------------------------------------
# layer primitives
# ---------------------------------------------------------------------------


@dataclass
class _BlockCache:
    """affine -> ReLU -> dropout cache for one layer."""

    x: Matrix
    pre: Matrix
    mask: Matrix | None  # train-mode keep mask, None in eval
    keep: float


def _block_forward(
    x: Matrix,
    layer: LayerParams,
    rate: float,
    train_mode: bool,
    rng_seed: int,
    tag: int,
    index: int,
) -> tuple[Matrix, _BlockCache]:
    pre = x @ layer.weight + layer.bias
    act = np.maximum(pre, 0.0)
    keep = 1.0 - rate
    if rate <= 0.0:
        return act, _BlockCache(x=x, pre=pre, mask=None, keep=1.0)
    if train_mode:
        mask = rng_for(rng_seed, tag, index).random(act.shape) >= rate
        return act * mask, _BlockCache(x=x, pre=pre, mask=mask, keep=keep)
    return act * keep, _BlockCache(x=x, pre=pre, mask=None, keep=keep)


def _block_backward(
    g: Matrix, layer: LayerParams, cache: _BlockCache
) -> tuple[Matrix, np.ndarray, Matrix]:
    """Returns (grad_weight, grad_bias, grad_input)."""
    if cache.mask is not None:
        g = g * cache.mask
    elif cache.keep != 1.0:
        g = g * cache.keep
    g = g * (cache.pre > 0)
    gw = cache.x.T @ g
    gb = g.sum(axis=0)
    gx = g @ layer.weight.T
    return gw, gb, gx


def _check_input(x: Matrix, expected_cols: int, what: str) -> Matrix:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"{what} input must be 2-D, got shape {x.shape}")
    if x.shape[1] != expected_cols:
        raise ValueError(
            f"{what} input has {x.shape[1]} columns, expected {expected_cols}"
        )
    return x


# ---------------------------------------------------------------------------
# encoder
# ---------------------------------------------------------------------------


def forward_encoder(
    params: ParamSet, batch: Matrix, train_mode: bool = False, rng_seed: int = 0
) -> tuple[Matrix, list[_BlockCache]]:
    """Encoder forward pass; returns (h, cache) with one cache per layer."""
    x = _check_input(batch, params.encoder[0].weight.shape[0], "encoder")
    caches = []
    for i, layer in enumerate(params.encoder):
        x, cache = _block_forward(
            x, layer, params.encoder_dropout, train_mode, rng_seed, _ENC_TAG, i
        )
        caches.append(cache)
    return x, caches


def encoder_backward(
    params: ParamSet, cache: list[_BlockCache], grad_h: Matrix
) -> tuple[dict[str, np.ndarray], Matrix]:
    grads: dict[str, np.ndarray] = {}
    g = grad_h
    for i in reversed(range(len(params.encoder))):
        gw, gb, g = _block_backward(g, params.encoder[i], cache[i])
        grads[f"encoder.{i}.weight"] = gw
        grads[f"encoder.{i}.bias"] = gb
    return grads, g


# ---------------------------------------------------------------------------
# projection head (normalized) and classification head (logits)
# ---------------------------------------------------------------------------


@dataclass
class _HeadCache:
    block: _BlockCache
    hidden: Matrix  # input to the final affine
    out: Matrix  # final affine output (pre-normalization for the proj head)
    norms: np.ndarray | None = None
    zero_rows: np.ndarray | None = None
    z: Matrix | None = None


def _head_forward(
    layers: list[LayerParams],
    h: Matrix,
    rate: float,
    train_mode: bool,
    rng_seed: int,
    tag: int,
    what: str,
) -> _HeadCache:
    h = _check_input(h, layers[0].weight.shape[0], what)
    hidden, block = _block_forward(h, layers[0], rate, train_mode, rng_seed, tag, 0)
    out = hidden @ layers[1].weight + layers[1].bias
    return _HeadCache(block=block, hidden=hidden, out=out)


def _head_backward(
    layers: list[LayerParams], cache: _HeadCache, g_out: Matrix, prefix: str
) -> tuple[dict[str, np.ndarray], Matrix]:
    grads = {
        f"{prefix}.1.weight": cache.hidden.T @ g_out,
        f"{prefix}.1.bias": g_out.sum(axis=0),
    }
    g = g_out @ layers[1].weight.T
    gw, gb, g = _block_backward(g, layers[0], cache.block)
    grads[f"{prefix}.0.weight"] = gw
    grads[f"{prefix}.0.bias"] = gb
    return grads, g


def forward_projection(
    params: ParamSet, h: Matrix, train_mode: bool = False, rng_seed: int = 0
) -> tuple[Matrix, _HeadCache]:
    """Projection head forward; output rows are L2-normalized.

    Exactly-zero pre-normalization rows map to the first unit basis vector
    (fixed convention keeping the op total); their backward gradient is 0.
    """
    cache = _head_forward(
        params.proj_head, h, params.head_dropout, train_mode, rng_seed, _PROJ_TAG,
        "projection",
    )
    v = cache.out
    norms = np.linalg.norm(v, axis=1)
    zero_rows = norms == 0.0
    safe = np.where(zero_rows, 1.0, norms)
    z = v / safe[:, None]
    if zero_rows.any():
        z[zero_rows] = 0.0
        z[zero_rows, 0] = 1.0
    cache.norms = norms
    cache.zero_rows = zero_rows
    cache.z = z
    return z, cache


def projection_backward(
    params: ParamSet, cache: _HeadCache, grad_z: Matrix
) -> tuple[dict[str, np.ndarray], Matrix]:
    z, norms, zero_rows = cache.z, cache.norms, cache.zero_rows
    # d/dv of v/||v||: (g - (g.z) z) / ||v||
    safe = np.where(zero_rows, 1.0, norms)
    gv = (grad_z - (grad_z * z).sum(axis=1, keepdims=True) * z) / safe[:, None]
    gv[zero_rows] = 0.0
    return _head_backward(params.proj_head, cache, gv, "proj")


def forward_classifier(
    params: ParamSet, h: Matrix, train_mode: bool = False, rng_seed: int = 0
) -> tuple[Matrix, _HeadCache]:
    """Classification head forward; returns raw logits."""
    cache = _head_forward(
        params.cls_head, h, params.head_dropout, train_mode, rng_seed, _CLS_TAG,
        "classifier",
    )
    return cache.out, cache


def classifier_backward(
    params: ParamSet, cache: _HeadCache, grad_logits: Matrix
) -> tuple[dict[str, np.ndarray], Matrix]:
    return _head_backward(params.cls_head, cache, grad_logits, "cls")


# ---------------------------------------------------------------------------
# softmax / cross-entropy
# ---------------------------------------------------------------------------


def softmax(logits: Matrix) -> Matrix:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_backward(probs: Matrix, grad_probs: Matrix) -> Matrix:
    inner = (grad_probs * probs).sum(axis=1, keepdims=True)
    return probs * (grad_probs - inner)


def softmax_xent(
    logits: Matrix, targets: np.ndarray
) -> tuple[float, Matrix]:
    """Mean -log softmax(logits)[target] and its analytic logit gradient."""
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets)
    n, k = logits.shape
    if targets.shape != (n,):
        raise ValueError(f"targets must have shape ({n},), got {targets.shape}")
    if targets.min() < 0 or targets.max() >= k:
        raise ValueError(f"target index out of range [0, {k})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1))
    logp = shifted[np.arange(n), targets] - logz
    loss = float(-logp.mean())
    grad = softmax(logits)
    grad[np.arange(n), targets] -= 1.0
    grad /= n
    return loss, grad


# ---------------------------------------------------------------------------
# SGD with momentum, FixMatch-style cosine schedule
# ---------------------------------------------------------------------------


@dataclass
class OptimState:
    learning_rate: float
    momentum: float = 0.9
    velocity: dict[str, np.ndarray] = field(default_factory=dict)
    schedule: str = "constant"  # "constant" | "cosine"
    total_steps: int = 0
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if self.schedule not in ("constant", "cosine"):
            raise ValueError(f"unknown schedule {self.schedule!r}")


def make_optimizer(
    params: ParamSet,
    learning_rate: float,
    momentum: float = 0.9,
    schedule: str = "constant",
    total_steps: int = 0,
    weight_decay: float = 0.0,
) -> OptimState:
    velocity = {name: np.zeros_like(t) for name, t in named_tensors(params)}
    return OptimState(
        learning_rate=learning_rate,
        momentum=momentum,
        velocity=velocity,
        schedule=schedule,
        total_steps=total_steps,
        weight_decay=weight_decay,
    )


def lr_at(opt: OptimState, step: int) -> float:
    if opt.schedule == "cosine":
        # FixMatch decay: eta0 * cos(7 pi step / (16 total))
        frac = step / max(1, opt.total_steps)
        return opt.learning_rate * math.cos(7.0 * math.pi * frac / 16.0)
    return opt.learning_rate


def sgd_step(
    params: ParamSet,
    grads: dict[str, np.ndarray],
    opt: OptimState,
    step: int,
) -> None:
    """velocity <- momentum * velocity + grad; param <- param - lr(step) * velocity.

    Tensors without an entry in ``grads`` are left untouched (frozen), and
    their velocity does not decay either.
    """
    eta = lr_at(opt, step)
    for name, tensor in named_tensors(params):
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != tensor.shape:
            raise ValueError(f"gradient shape mismatch for {name}")
        if opt.weight_decay != 0.0:
            g = g + opt.weight_decay * tensor
        v = opt.velocity[name]
        v *= opt.momentum
        v += g
        tensor -= eta * v
