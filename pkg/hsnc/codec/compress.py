from __future__ import annotations

from typing import Dict, Sequence, Tuple

import numpy as np

from ..dataio.tile import HyperspectralTile
from ..errors import DataError
from ..models import VaeConfig
from ..normalize import RadianceStats, transform_radiance
from ..tensor.core import Tensor
from ..vae import VaeParams, decode, encode
from .latent import Content, LatentCode, LatentDtype

TILE_HEADER_BYTES = 24
LATENT_HEADER_BYTES = 24


def compress(tile: HyperspectralTile, stats: RadianceStats, params: VaeParams, cfg: VaeConfig,
             dtype: LatentDtype = "f32", content: Content = "mean_only") -> LatentCode:
    """normalize → encode (evaluation mode) → store mu, and logvar on request."""
    if tile.space != "raw":
        raise DataError(f"tile {tile.id}: compress expects raw radiance, got {tile.space}")
    if tile.shape != cfg.input_shape:
        raise DataError(f"tile {tile.id} has shape {tile.shape}, model expects {cfg.input_shape}")
    z = transform_radiance(tile, stats, "forward")
    lat = encode(Tensor(z.data[None]), params, cfg)
    logvar = lat.logvar.data[0] if content == "mean_logvar" else None
    return LatentCode(tile.id, lat.mu.data[0], logvar, dtype)


def decompress(code: LatentCode, stats: RadianceStats, params: VaeParams, cfg: VaeConfig) -> HyperspectralTile:
    """decode(mu) → inverse radiance transform; the result is strictly positive."""
    if code.shape != cfg.latent_shape:
        raise DataError(f"latent {code.tile_id} has shape {code.shape}, model expects {cfg.latent_shape}")
    xhat = decode(Tensor(code.mean.astype(np.float32)[None]), params, cfg).data[0]
    return transform_radiance(HyperspectralTile(code.tile_id, xhat, "normalized"), stats, "inverse")


def compression_ratio(in_shape: Sequence[int], code: LatentCode) -> float:
    """Element-count ratio C·H·W / (c·h·w·multiplier)."""
    return float(np.prod(in_shape)) / float(code.elements)


def ratio_report(in_shape: Sequence[int], code: LatentCode) -> Dict[str, float]:
    """Element and byte accounting; input bytes assume f32 tiles."""
    in_elems = int(np.prod(in_shape))
    return {
        "element_ratio": compression_ratio(in_shape, code),
        "byte_ratio": in_elems * 4 / code.payload_bytes,
        "file_ratio": (in_elems * 4 + TILE_HEADER_BYTES) / (code.payload_bytes + LATENT_HEADER_BYTES),
        "latent_bytes": float(code.payload_bytes),
        "input_bytes": float(in_elems * 4),
    }


def shape_ratio(in_shape: Sequence[int], latent_shape: Tuple[int, int, int], with_logvar: bool = False) -> float:
    return float(np.prod(in_shape)) / float(np.prod(latent_shape) * (2 if with_logvar else 1))
