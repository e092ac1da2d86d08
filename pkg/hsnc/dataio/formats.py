"""HSTILE01 tile and HSL2_01 product containers.

All integers little-endian, floats IEEE-754 binary32 little-endian.

HSTILE01: "HSTILE01" | u32 C | u32 H | u32 W | u8 dtype (0=f32) | u8 space
(0=raw, 1=normalized) | 2 reserved zero bytes | payload channel-major.

HSL2_01: "HSL2_01\\0" | u32 nprod | u32 h | u32 w | per product: u8 name_len,
name, u8 norm_kind | one f32 h×w payload per product, in header order.
"""
from __future__ import annotations

import struct
from pathlib import Path
from typing import Dict

import numpy as np

from ..errors import FormatError
from .tile import HyperspectralTile, L2Product, L2ProductSet

TILE_MAGIC = b"HSTILE01"
TILE_HEADER = struct.Struct("<8sIIIBB2x")
L2_MAGIC = b"HSL2_01\x00"
L2_HEADER = struct.Struct("<8sIII")

DTYPE_F32 = 0
DTYPE_F16 = 1
SPACE_CODES: Dict[str, int] = {"raw": 0, "normalized": 1}
NORM_CODES: Dict[str, int] = {"asinh": 0, "zscore": 1, "logit": 2}

_F32 = np.dtype("<f4")


def _code_to(mapping: Dict[str, int], code: int, what: str, offset: int) -> str:
    for name, c in mapping.items():
        if c == code:
            return name
    raise FormatError(f"unknown {what} code {code}", offset=offset)


def encode_tile(tile: HyperspectralTile) -> bytes:
    header = TILE_HEADER.pack(TILE_MAGIC, tile.channels, tile.height, tile.width,
                              DTYPE_F32, SPACE_CODES[tile.space])
    return header + tile.data.astype(_F32, copy=False).tobytes(order="C")


def decode_tile(buf: bytes, tile_id: str = "") -> HyperspectralTile:
    if len(buf) < TILE_HEADER.size:
        raise FormatError("truncated tile header", offset=0, expected=TILE_HEADER.size, actual=len(buf))
    magic, C, H, W, dtype, space = TILE_HEADER.unpack_from(buf, 0)
    if magic != TILE_MAGIC:
        raise FormatError(f"bad tile magic {magic!r}", offset=0)
    if dtype != DTYPE_F32:
        raise FormatError(f"tile dtype must be 0 (f32), got {dtype}", offset=20)
    space_name = _code_to(SPACE_CODES, space, "space", 21)
    if min(C, H, W) < 1:
        raise FormatError(f"tile dimensions {C}x{H}x{W} must be >= 1", offset=8)
    need = C * H * W * 4
    have = len(buf) - TILE_HEADER.size
    if have != need:
        raise FormatError("tile payload length mismatch", offset=TILE_HEADER.size, expected=need, actual=have)
    data = np.frombuffer(buf, dtype=_F32, offset=TILE_HEADER.size).reshape(C, H, W)
    return HyperspectralTile(tile_id, data.astype(np.float32), space_name)


def write_tile(tile: HyperspectralTile, path: str | Path) -> None:
    Path(path).write_bytes(encode_tile(tile))


def read_tile(path: str | Path) -> HyperspectralTile:
    p = Path(path)
    try:
        buf = p.read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read tile {p}: {exc}") from None
    return decode_tile(buf, p.stem)


def encode_l2(l2: L2ProductSet) -> bytes:
    parts = [L2_HEADER.pack(L2_MAGIC, len(l2.products), l2.h, l2.w)]
    for name, prod in l2.products.items():
        raw = name.encode("utf-8")
        parts.append(struct.pack("<B", len(raw)) + raw + struct.pack("<B", NORM_CODES[prod.kind]))
    for prod in l2.products.values():
        parts.append(prod.values.astype(_F32, copy=False).tobytes(order="C"))
    return b"".join(parts)


def decode_l2(buf: bytes, set_id: str = "") -> L2ProductSet:
    if len(buf) < L2_HEADER.size:
        raise FormatError("truncated L2 header", offset=0, expected=L2_HEADER.size, actual=len(buf))
    magic, nprod, h, w = L2_HEADER.unpack_from(buf, 0)
    if magic != L2_MAGIC:
        raise FormatError(f"bad L2 magic {magic!r}", offset=0)
    pos = L2_HEADER.size
    entries = []
    for _ in range(nprod):
        if pos + 1 > len(buf):
            raise FormatError("truncated L2 product table", offset=pos, expected=1, actual=len(buf) - pos)
        n = buf[pos]
        if pos + 2 + n > len(buf):
            raise FormatError("truncated L2 product table", offset=pos, expected=n + 2, actual=len(buf) - pos)
        name = buf[pos + 1: pos + 1 + n].decode("utf-8")
        kind = _code_to(NORM_CODES, buf[pos + 1 + n], "norm kind", pos + 1 + n)
        entries.append((name, kind))
        pos += 2 + n
    need = nprod * h * w * 4
    have = len(buf) - pos
    if have != need:
        raise FormatError("L2 payload length mismatch", offset=pos, expected=need, actual=have)
    products = {}
    for name, kind in entries:
        values = np.frombuffer(buf, dtype=_F32, count=h * w, offset=pos).reshape(h, w)
        products[name] = L2Product(values.astype(np.float32), kind)
        pos += h * w * 4
    return L2ProductSet(set_id, products)


def write_l2(l2: L2ProductSet, path: str | Path) -> None:
    Path(path).write_bytes(encode_l2(l2))


def read_l2(path: str | Path) -> L2ProductSet:
    p = Path(path)
    try:
        buf = p.read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read L2 set {p}: {exc}") from None
    return decode_l2(buf, p.stem)
