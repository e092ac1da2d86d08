"""Synthetic granules with planted atmospheric-like signals.

Each pixel spectrum follows

    r(λ) = B(λ)·exp(−Σ_k a_k·σ_k(λ))·(1 − f) + B_cloud(λ)·f

with a smooth clear-sky continuum B, a brighter flat cloud continuum, three
Gaussian-bump cross-sections σ_k, smooth non-negative absorber fields a_k and
a cloud fraction f from thresholded smoothed noise. The truth maps become the
Level-2 products, so recoverability can be certified independently of any model.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
from scipy.ndimage import gaussian_filter
from scipy.special import ndtri
from tqdm import tqdm

from ..log import progress_enabled
from ..models import SynthConfig
from ..tensor.rng import RngState
from ..utils import write_json
from .formats import write_l2, write_tile
from .split import SplitAssignment, split_files
from .tile import HyperspectralTile, L2Product, L2ProductSet

logger = logging.getLogger(__name__)

# peak optical depths of the no2, o3 and hcho analogs
ABSORBER_AMPS = (0.3, 0.8, 0.2)
NO2_UNIT = 1e16
HCHO_UNIT = 1e17
O3_RANGE = (200.0, 500.0)
CLOUD_EDGE = 0.5

# (centre, width, height) of each bump on the unit wavelength axis
_BUMPS = (
    ((0.55, 0.030, 1.0), (0.65, 0.030, 0.8), (0.75, 0.030, 0.9), (0.85, 0.030, 0.6)),
    ((0.02, 0.080, 1.0), (0.15, 0.050, 0.6), (0.25, 0.040, 0.3)),
    ((0.30, 0.020, 1.0), (0.38, 0.020, 0.7), (0.46, 0.020, 0.5)),
)


@dataclass
class SpectralTemplates:
    wavelength_nm: np.ndarray
    continuum: np.ndarray
    cloud_continuum: np.ndarray
    cross_sections: np.ndarray  # [3, C]

    def to_json(self) -> dict:
        return {
            "wavelength_nm": self.wavelength_nm.tolist(),
            "continuum": self.continuum.tolist(),
            "cloud_continuum": self.cloud_continuum.tolist(),
            "cross_sections": self.cross_sections.tolist(),
        }

    @classmethod
    def from_json(cls, d: dict) -> "SpectralTemplates":
        return cls(*(np.asarray(d[k], dtype=np.float64)
                     for k in ("wavelength_nm", "continuum", "cloud_continuum", "cross_sections")))


def make_templates(cfg: SynthConfig) -> SpectralTemplates:
    lo, hi = cfg.wavelength_nm
    wl = np.linspace(lo, hi, cfg.channels)
    t = (wl - lo) / (hi - lo)
    continuum = cfg.radiance_scale * (0.5 + 0.8 * t - 0.3 * t * t) * (1.0 + 0.05 * np.sin(6.0 * np.pi * t))
    cloud = cfg.radiance_scale * 1.5 * (0.9 + 0.2 * t)
    sigmas = np.zeros((len(_BUMPS), cfg.channels))
    for k, bumps in enumerate(_BUMPS):
        for centre, width, height in bumps:
            sigmas[k] += height * np.exp(-0.5 * ((t - centre) / width) ** 2)
        sigmas[k] /= sigmas[k].max()
    return SpectralTemplates(wl, continuum, cloud, sigmas)


def _smooth_field(rng: RngState, n: int, scale: float) -> np.ndarray:
    g = gaussian_filter(rng.normal((n, n), dtype=np.float64), sigma=scale, mode="wrap")
    sd = g.std()
    return (g - g.mean()) / sd if sd > 0 else np.zeros_like(g)


def _cloud_fraction(rng: RngState, cfg: SynthConfig) -> np.ndarray:
    g = _smooth_field(rng, cfg.tile, cfg.cloud_smoothness)
    if cfg.cloud_cover <= 0.0:
        return np.zeros_like(g)
    if cfg.cloud_cover >= 1.0:
        return np.ones_like(g)
    threshold = ndtri(1.0 - cfg.cloud_cover)
    return np.clip((g - threshold) / CLOUD_EDGE, 0.0, 1.0)


def synth_generate(cfg: SynthConfig, rng: RngState, tile_id: str = "t00000",
                   templates: Optional[SpectralTemplates] = None) -> Tuple[HyperspectralTile, L2ProductSet]:
    cfg.ensure_valid()
    tpl = templates or make_templates(cfg)
    n = cfg.tile
    # unit-range absorber patterns in [0, 1)
    unit = np.stack([0.5 + 0.5 * np.tanh(_smooth_field(rng, n, cfg.field_smoothness)) for _ in ABSORBER_AMPS])
    fields = cfg.absorber_scale * np.asarray(ABSORBER_AMPS)[:, None, None] * unit
    f = _cloud_fraction(rng, cfg)
    tau = np.einsum("kc,khw->chw", tpl.cross_sections, fields)
    r = tpl.continuum[:, None, None] * np.exp(-tau) * (1.0 - f) + tpl.cloud_continuum[:, None, None] * f
    if cfg.noise > 0:
        r = r * np.exp(cfg.noise * rng.normal(r.shape, dtype=np.float64))

    o3_lo, o3_hi = O3_RANGE
    truth = {
        "no2": fields[0] * NO2_UNIT,
        "o3": o3_lo + (o3_hi - o3_lo) * unit[1],
        "hcho": fields[2] * HCHO_UNIT,
        "cloud": f,
    }
    kinds = {"no2": "asinh", "o3": "zscore", "hcho": "asinh", "cloud": "logit"}
    products = {}
    for name, values in truth.items():
        values = values.astype(np.float32)
        if cfg.nan_fraction > 0:
            values[rng.uniform((n, n)) < cfg.nan_fraction] = np.nan
        products[name] = L2Product(values, kinds[name])
    return HyperspectralTile(tile_id, r.astype(np.float32), "raw"), L2ProductSet(tile_id, products)


def tile_ids(n: int) -> List[str]:
    return [f"t{i:05d}" for i in range(n)]


def generate_dataset(cfg: SynthConfig, out_dir: str | Path, train_pct: int = 70) -> SplitAssignment:
    """Write a complete synthetic dataset directory; bitwise reproducible for a fixed seed."""
    cfg.ensure_valid()
    root = Path(out_dir)
    (root / "tiles").mkdir(parents=True, exist_ok=True)
    (root / "l2").mkdir(exist_ok=True)
    (root / "truth").mkdir(exist_ok=True)
    tpl = make_templates(cfg)
    base = RngState(cfg.seed).split("synth")
    ids = tile_ids(cfg.n_tiles)
    for tid in tqdm(ids, desc="synth", disable=not progress_enabled()):
        tile, l2 = synth_generate(cfg, base.split("tile", tid), tid, tpl)
        write_tile(tile, root / "tiles" / f"{tid}.hst")
        write_l2(l2, root / "l2" / f"{tid}.hsl2")
    split = split_files(ids, train_pct)
    write_json(root / "synth.json", cfg.model_dump(mode="json"))
    write_json(root / "split.json", split.to_json())
    write_json(root / "truth" / "templates.json", tpl.to_json())
    logger.info("wrote %d tiles to %s (%d train / %d val)", len(ids), root, len(split.train_ids), len(split.val_ids))
    return split
