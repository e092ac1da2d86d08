"""HSCKPT01 checkpoint container.

Layout: "HSCKPT01" | u32 header_len | UTF-8 JSON header | blobs. The header
carries {version, vae_config, train_state, rng, buffer, blobs[]}; each blob
entry is {name, shape, offset, nbytes} into the f32 little-endian blob area
that follows the header. Names prefixed "optim." hold optimizer moments.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict

import numpy as np

from ..errors import FormatError
from ..models import VaeConfig
from .params import VaeParams

MAGIC = b"HSCKPT01"
VERSION = 1
OPTIM_PREFIX = "optim."
_F32 = np.dtype("<f4")


@dataclass
class Checkpoint:
    vae_config: VaeConfig
    params: VaeParams
    optim: Dict[str, np.ndarray] = field(default_factory=dict)
    train_state: Dict[str, Any] = field(default_factory=dict)
    rng: Dict[str, Any] = field(default_factory=dict)
    buffer: Dict[str, Any] = field(default_factory=dict)

    @property
    def step(self) -> int:
        return int(self.train_state.get("step", 0))


def save_checkpoint(path: str | Path, ckpt: Checkpoint) -> None:
    blobs = [(name, t.data) for name, t in ckpt.params.items()]
    blobs += [(OPTIM_PREFIX + name, arr) for name, arr in ckpt.optim.items()]
    entries, payload, offset = [], [], 0
    for name, arr in blobs:
        raw = np.ascontiguousarray(arr, dtype=_F32).tobytes()
        entries.append({"name": name, "shape": list(np.shape(arr)), "offset": offset, "nbytes": len(raw)})
        payload.append(raw)
        offset += len(raw)
    header = json.dumps({
        "version": VERSION,
        "vae_config": ckpt.vae_config.model_dump(mode="json"),
        "train_state": ckpt.train_state,
        "rng": ckpt.rng,
        "buffer": ckpt.buffer,
        "blobs": entries,
    }, sort_keys=True).encode("utf-8")
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        for raw in payload:
            f.write(raw)
    tmp.replace(path)


def load_checkpoint(path: str | Path, requires_grad: bool = True) -> Checkpoint:
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read checkpoint {path}: {exc}") from None
    if len(buf) < 12:
        raise FormatError("truncated checkpoint header", offset=0, expected=12, actual=len(buf))
    if buf[:8] != MAGIC:
        raise FormatError(f"bad checkpoint magic {buf[:8]!r}", offset=0)
    (hlen,) = struct.unpack_from("<I", buf, 8)
    if 12 + hlen > len(buf):
        raise FormatError("truncated checkpoint header", offset=12, expected=hlen, actual=len(buf) - 12)
    try:
        header = json.loads(buf[12: 12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"checkpoint header is not JSON: {exc}", offset=12) from None
    if header.get("version") != VERSION:
        raise FormatError(f"unsupported checkpoint version {header.get('version')!r}", offset=12)
    base = 12 + hlen
    params: Dict[str, np.ndarray] = {}
    optim: Dict[str, np.ndarray] = {}
    for e in header["blobs"]:
        start = base + e["offset"]
        if start + e["nbytes"] > len(buf):
            raise FormatError(f"truncated blob {e['name']}", offset=start, expected=e["nbytes"], actual=max(0, len(buf) - start))
        arr = np.frombuffer(buf, dtype=_F32, count=e["nbytes"] // 4, offset=start).reshape(e["shape"]).astype(np.float32)
        if e["name"].startswith(OPTIM_PREFIX):
            optim[e["name"][len(OPTIM_PREFIX):]] = arr
        else:
            params[e["name"]] = arr
    return Checkpoint(
        vae_config=VaeConfig.model_validate(header["vae_config"]),
        params=VaeParams.from_arrays(params, requires_grad=requires_grad),
        optim=optim,
        train_state=header.get("train_state", {}),
        rng=header.get("rng", {}),
        buffer=header.get("buffer", {}),
    )


def load_model(path: str | Path) -> tuple[VaeConfig, VaeParams]:
    """Config and frozen parameters for inference."""
    ckpt = load_checkpoint(path, requires_grad=False)
    return ckpt.vae_config, ckpt.params


def checkpoint_summary(path: str | Path) -> Dict[str, Any]:
    ckpt = load_checkpoint(path, requires_grad=False)
    return {"step": ckpt.step, "params": ckpt.params.num_elements(), "config_hash": ckpt.vae_config.config_hash()}
