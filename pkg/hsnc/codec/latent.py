"""HSLAT01 latent container.

"HSLAT01\\0" | u32 c | u32 h | u32 w | u8 dtype (0=f32, 1=f16) | u8 content
(0=mean, 1=mean+logvar) | 2 reserved zero bytes | mean payload, then logvar
when present; channel-major, little-endian.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Optional

import numpy as np

from ..errors import DataError, FormatError

LatentDtype = Literal["f32", "f16"]
Content = Literal["mean_only", "mean_logvar"]

MAGIC = b"HSLAT01\x00"
HEADER = struct.Struct("<8sIIIBB2x")
DTYPE_CODES = {"f32": 0, "f16": 1}
CONTENT_CODES = {"mean_only": 0, "mean_logvar": 1}
_NP = {"f32": np.dtype("<f4"), "f16": np.dtype("<f2")}


@dataclass
class LatentCode:
    tile_id: str
    mean: np.ndarray
    logvar: Optional[np.ndarray] = None
    dtype: LatentDtype = "f32"

    def __post_init__(self) -> None:
        if self.dtype not in _NP:
            raise DataError(f"unknown latent dtype {self.dtype!r}")
        # binary16 conversion rounds to nearest even
        self.mean = np.ascontiguousarray(self.mean, dtype=_NP[self.dtype])
        if self.mean.ndim != 3:
            raise DataError(f"latent mean must be c×h×w, got shape {self.mean.shape}")
        if self.logvar is not None:
            self.logvar = np.ascontiguousarray(self.logvar, dtype=_NP[self.dtype])
            if self.logvar.shape != self.mean.shape:
                raise DataError(f"logvar shape {self.logvar.shape} != mean shape {self.mean.shape}")

    @property
    def content(self) -> Content:
        return "mean_only" if self.logvar is None else "mean_logvar"

    @property
    def shape(self):
        return self.mean.shape

    @property
    def multiplier(self) -> int:
        return 1 if self.logvar is None else 2

    @property
    def elements(self) -> int:
        return int(self.mean.size) * self.multiplier

    @property
    def payload_bytes(self) -> int:
        return self.elements * _NP[self.dtype].itemsize


def encode_latent(code: LatentCode) -> bytes:
    c, h, w = code.shape
    parts = [HEADER.pack(MAGIC, c, h, w, DTYPE_CODES[code.dtype], CONTENT_CODES[code.content]), code.mean.tobytes()]
    if code.logvar is not None:
        parts.append(code.logvar.tobytes())
    return b"".join(parts)


def decode_latent(buf: bytes, tile_id: str = "") -> LatentCode:
    if len(buf) < HEADER.size:
        raise FormatError("truncated latent header", offset=0, expected=HEADER.size, actual=len(buf))
    magic, c, h, w, dtype, content = HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError(f"bad latent magic {magic!r}", offset=0)
    names = {v: k for k, v in DTYPE_CODES.items()}
    if dtype not in names:
        raise FormatError(f"unknown latent dtype code {dtype}", offset=20)
    if content not in (0, 1):
        raise FormatError(f"unknown latent content code {content}", offset=21)
    dt = _NP[names[dtype]]
    n = c * h * w
    need = n * dt.itemsize * (1 + content)
    have = len(buf) - HEADER.size
    if have != need:
        raise FormatError("latent payload length mismatch", offset=HEADER.size, expected=need, actual=have)
    mean = np.frombuffer(buf, dtype=dt, count=n, offset=HEADER.size).reshape(c, h, w)
    logvar = None
    if content:
        logvar = np.frombuffer(buf, dtype=dt, count=n, offset=HEADER.size + n * dt.itemsize).reshape(c, h, w)
    return LatentCode(tile_id, mean.copy(), None if logvar is None else logvar.copy(), names[dtype])


def write_latent(code: LatentCode, path: str | Path) -> None:
    Path(path).write_bytes(encode_latent(code))


def read_latent(path: str | Path) -> LatentCode:
    p = Path(path)
    try:
        buf = p.read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read latent {p}: {exc}") from None
    return decode_latent(buf, p.stem)
