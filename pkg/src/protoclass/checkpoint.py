"""Binary checkpoint format for :class:`~protoclass.net.ParamSet`.

Layout (all integers little-endian):

    magic   "CCKP" (4 bytes)
    version uint32 = 1
    records, repeated until EOF:
        name_len  uint64
        name      UTF-8 bytes
        rows      uint64
        cols      uint64
        data      rows*cols float64, row-major

Tensor order is fixed: live tensors (see ``named_tensors``), then their EMA
shadows under ``ema.<name>``, then the 1x1 scalars ``ema_decay``,
``encoder_dropout`` and ``head_dropout``.  Biases are stored as 1 x n rows.
Round-trips are bit-exact.
"""

from __future__ import annotations

import re
import struct
from pathlib import Path

import numpy as np

from .net import LayerParams, ParamSet, named_tensors

MAGIC = b"CCKP"
VERSION = 1

_NAME_RE = re.compile(r"^(encoder|proj|cls)\.(\d+)\.(weight|bias)$")


def _as_2d(arr: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(arr, dtype=np.float64)
    return a.reshape(1, -1) if a.ndim == 1 else a


def _write_record(fh, name: str, arr: np.ndarray) -> None:
    a = _as_2d(arr)
    encoded = name.encode("utf-8")
    fh.write(struct.pack("<Q", len(encoded)))
    fh.write(encoded)
    fh.write(struct.pack("<QQ", a.shape[0], a.shape[1]))
    fh.write(a.astype("<f8").tobytes(order="C"))


def save_checkpoint(params: ParamSet, path: str | Path) -> None:
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        live = named_tensors(params)
        for name, tensor in live:
            _write_record(fh, name, tensor)
        for name, _ in live:
            _write_record(fh, f"ema.{name}", params.ema_shadow[name])
        _write_record(fh, "ema_decay", np.array([[params.ema_decay]]))
        _write_record(fh, "encoder_dropout", np.array([[params.encoder_dropout]]))
        _write_record(fh, "head_dropout", np.array([[params.head_dropout]]))


def _read_exact(fh, n: int, path: Path) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise ValueError(f"truncated checkpoint file: {path}")
    return buf


def read_tensors(path: str | Path) -> dict[str, np.ndarray]:
    """All records in file order (dict preserves insertion order)."""
    path = Path(path)
    tensors: dict[str, np.ndarray] = {}
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise ValueError(
                f"bad checkpoint magic {magic!r} in {path}, expected {MAGIC!r}"
            )
        (version,) = struct.unpack("<I", _read_exact(fh, 4, path))
        if version != VERSION:
            raise ValueError(f"unsupported checkpoint version {version} in {path}")
        while True:
            head = fh.read(8)
            if not head:
                break
            if len(head) != 8:
                raise ValueError(f"truncated checkpoint file: {path}")
            (name_len,) = struct.unpack("<Q", head)
            name = _read_exact(fh, name_len, path).decode("utf-8")
            rows, cols = struct.unpack("<QQ", _read_exact(fh, 16, path))
            raw = _read_exact(fh, rows * cols * 8, path)
            arr = np.frombuffer(raw, dtype="<f8").astype(np.float64)
            tensors[name] = arr.reshape(rows, cols)
    return tensors


def _collect_layers(tensors: dict[str, np.ndarray], group: str) -> list[LayerParams]:
    layers = []
    i = 0
    while f"{group}.{i}.weight" in tensors:
        weight = tensors[f"{group}.{i}.weight"]
        bias = tensors.get(f"{group}.{i}.bias")
        if bias is None:
            raise ValueError(f"checkpoint missing {group}.{i}.bias")
        layers.append(LayerParams(weight=weight.copy(), bias=bias.reshape(-1).copy()))
        i += 1
    if not layers:
        raise ValueError(f"checkpoint has no {group} layers")
    return layers


def load_checkpoint(path: str | Path) -> ParamSet:
    tensors = read_tensors(path)

    def scalar(name: str, default: float) -> float:
        rec = tensors.get(name)
        return float(rec[0, 0]) if rec is not None else default

    params = ParamSet(
        encoder=_collect_layers(tensors, "encoder"),
        proj_head=_collect_layers(tensors, "proj"),
        cls_head=_collect_layers(tensors, "cls"),
        ema_shadow={},
        ema_decay=scalar("ema_decay", 0.999),
        encoder_dropout=scalar("encoder_dropout", 0.0),
        head_dropout=scalar("head_dropout", 0.1),
    )
    shadow = {}
    for name, live in named_tensors(params):
        rec = tensors.get(f"ema.{name}")
        if rec is None:
            raise ValueError(f"checkpoint missing ema.{name}")
        shadow[name] = rec.reshape(live.shape).copy()
    params.ema_shadow = shadow
    return params
