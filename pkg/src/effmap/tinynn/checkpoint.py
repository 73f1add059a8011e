"""Checkpoint serialization (magic "TNN1").

    bytes 0..3   magic
    bytes 4..7   header length (u32 LE)
    header       UTF-8 JSON: model_config, train_config echo, history,
                 adam_t, manifest [{name, shape, offset, kind}]
    payload      float32 little-endian blobs at the manifest offsets

Kinds: "param" (trainable), "buffer" (batch-norm running stats),
"opt_m"/"opt_v" (Adam moments).  Save -> load -> predict is bitwise
identical to the pre-save model.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import BadMagicError, FormatError, SizeMismatchError
from .model import ModelConfig, PatchClassifier

MAGIC = b"TNN1"


@dataclass
class Checkpoint:
    model_config: dict
    params: list[tuple[str, np.ndarray]]
    buffers: list[tuple[str, np.ndarray]]
    adam_t: int = 0
    opt_m: list[tuple[str, np.ndarray]] = field(default_factory=list)
    opt_v: list[tuple[str, np.ndarray]] = field(default_factory=list)
    history: dict = field(default_factory=dict)
    train_config: dict = field(default_factory=dict)


def checkpoint_from_model(
    model: PatchClassifier,
    adam_state=None,
    history: dict | None = None,
    train_config: dict | None = None,
) -> Checkpoint:
    params = [(name, p.value.astype(np.float32).copy()) for name, p in model.named_parameters()]
    buffers = [(name, arr.astype(np.float32).copy()) for name, arr in model.bn_buffers()]
    ckpt = Checkpoint(
        model_config=model.cfg.to_dict(),
        params=params,
        buffers=buffers,
        history=dict(history or {}),
        train_config=dict(train_config or {}),
    )
    if adam_state is not None:
        ckpt.adam_t = adam_state.t
        names = [name for name, _ in model.named_parameters()]
        ckpt.opt_m = [(n, m.astype(np.float32).copy()) for n, m in zip(names, adam_state.m)]
        ckpt.opt_v = [(n, v.astype(np.float32).copy()) for n, v in zip(names, adam_state.v)]
    return ckpt


def model_from_checkpoint(ckpt: Checkpoint, dtype=np.float32) -> PatchClassifier:
    cfg = ModelConfig.from_dict(ckpt.model_config)
    model = PatchClassifier(cfg, seed=0, dtype=dtype)
    have = dict(ckpt.params)
    expected = model.named_parameters()
    if len(have) != len(expected):
        raise FormatError(
            f"checkpoint has {len(have)} parameters, model needs {len(expected)}"
        )
    for name, p in expected:
        if name not in have:
            raise FormatError(f"checkpoint missing parameter {name}")
        if have[name].shape != p.value.shape:
            raise FormatError(
                f"parameter {name}: checkpoint shape {have[name].shape} != {p.value.shape}"
            )
        p.value[...] = have[name].astype(dtype)
    model.set_bn_buffers({k: v.astype(dtype) for k, v in ckpt.buffers})
    return model


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    manifest = []
    blobs = []
    offset = 0
    for kind, entries in (
        ("param", ckpt.params),
        ("buffer", ckpt.buffers),
        ("opt_m", ckpt.opt_m),
        ("opt_v", ckpt.opt_v),
    ):
        for name, arr in entries:
            arr = np.ascontiguousarray(arr, dtype="<f4")
            manifest.append(
                {"name": name, "shape": list(arr.shape), "offset": offset, "kind": kind}
            )
            blobs.append(arr.tobytes())
            offset += arr.nbytes
    header = {
        "model_config": ckpt.model_config,
        "train_config": ckpt.train_config,
        "history": ckpt.history,
        "adam_t": ckpt.adam_t,
        "manifest": manifest,
        "payload_bytes": offset,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for b in blobs:
            f.write(b)


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != MAGIC:
        raise BadMagicError(f"{path}: bad magic {raw[:4]!r}, expected {MAGIC!r}")
    (hlen,) = struct.unpack("<I", raw[4:8])
    try:
        header = json.loads(raw[8 : 8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"{path}: unparseable checkpoint header: {e}") from e
    payload = raw[8 + hlen :]
    if len(payload) != header.get("payload_bytes"):
        raise SizeMismatchError(
            f"{path}: payload is {len(payload)} bytes, header requires "
            f"{header.get('payload_bytes')}"
        )
    groups = {"param": [], "buffer": [], "opt_m": [], "opt_v": []}
    for entry in header["manifest"]:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape)) * 4
        start = entry["offset"]
        arr = np.frombuffer(payload[start : start + size], dtype="<f4").reshape(shape)
        groups[entry["kind"]].append((entry["name"], arr.copy()))
    return Checkpoint(
        model_config=header["model_config"],
        params=groups["param"],
        buffers=groups["buffer"],
        adam_t=int(header.get("adam_t", 0)),
        opt_m=groups["opt_m"],
        opt_v=groups["opt_v"],
        history=header.get("history", {}),
        train_config=header.get("train_config", {}),
    )
