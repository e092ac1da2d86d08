"""Reconstruction quality in normalized and physical units."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np
import pandas as pd

from ..dataio.tile import HyperspectralTile
from ..errors import DataError
from ..normalize import RadianceStats, normalize_batch
from ..tensor.rng import RngState
from ..utils import write_json

# composite display bands on the full 1028-channel grid
COMPOSITE_POSITIONS = (100, 500, 900)
REFERENCE_CHANNELS = 1028


@dataclass
class ReconReport:
    rmse_normalized: np.ndarray
    rmse_physical: np.ndarray
    mean_spectrum: np.ndarray
    spectrum_std: np.ndarray
    pixel_mse: Dict[str, np.ndarray] = field(default_factory=dict)
    compression_ratio: float = 1.0

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "channel": np.arange(len(self.rmse_normalized)),
            "rmse_normalized": self.rmse_normalized,
            "rmse_physical": self.rmse_physical,
            "mean_radiance": self.mean_spectrum,
            "radiance_std": self.spectrum_std,
        })

    def summary(self) -> dict:
        return {
            "channels": int(len(self.rmse_normalized)),
            "n_tiles": len(self.pixel_mse),
            "mean_rmse_normalized": float(self.rmse_normalized.mean()),
            "mean_rmse_physical": float(self.rmse_physical.mean()),
            "max_rmse_normalized": float(self.rmse_normalized.max()),
            "compression_ratio": float(self.compression_ratio),
            "composite_channels": composite_channels(len(self.rmse_normalized)),
        }


def composite_channels(channels: int) -> List[int]:
    return [min(channels - 1, int(round(p * channels / REFERENCE_CHANNELS))) for p in COMPOSITE_POSITIONS]


def eval_reconstruction(orig: Sequence[HyperspectralTile], recon: Sequence[HyperspectralTile],
                        stats: RadianceStats, compression_ratio: float = 1.0) -> ReconReport:
    if len(orig) != len(recon) or not orig:
        raise DataError(f"need matching non-empty tile lists, got {len(orig)} and {len(recon)}")
    for a, b in zip(orig, recon):
        if a.shape != b.shape:
            raise DataError(f"tile {a.id}: original {a.shape} vs reconstruction {b.shape}")
        if a.channels != stats.channels:
            raise DataError(f"tile {a.id} has {a.channels} channels, stats have {stats.channels}")
    if compression_ratio <= 0:
        raise DataError("compression_ratio must be > 0")
    raw_o = np.stack([t.data for t in orig]).astype(np.float64)
    raw_r = np.stack([t.data for t in recon]).astype(np.float64)
    z_err = normalize_batch(raw_r, stats).astype(np.float64) - normalize_batch(raw_o, stats).astype(np.float64)
    axes = (0, 2, 3)
    return ReconReport(
        rmse_normalized=np.sqrt(np.mean(z_err ** 2, axis=axes)),
        rmse_physical=np.sqrt(np.mean((raw_r - raw_o) ** 2, axis=axes)),
        mean_spectrum=raw_o.mean(axis=axes),
        spectrum_std=raw_o.std(axis=axes),
        pixel_mse={t.id: np.mean(z_err[i] ** 2, axis=0) for i, t in enumerate(orig)},
        compression_ratio=compression_ratio,
    )


def sample_spectra(orig: HyperspectralTile, recon: HyperspectralTile, rng: RngState, n: int = 2) -> pd.DataFrame:
    """Original and reconstructed spectra at ``n`` random pixels, one row per (pixel, channel)."""
    ys = rng.generator.integers(0, orig.height, size=n)
    xs = rng.generator.integers(0, orig.width, size=n)
    frames = []
    for k, (y, x) in enumerate(zip(ys, xs)):
        frames.append(pd.DataFrame({
            "pixel": k, "y": int(y), "x": int(x),
            "channel": np.arange(orig.channels),
            "original": orig.data[:, y, x],
            "reconstruction": recon.data[:, y, x],
        }))
    return pd.concat(frames, ignore_index=True)


def write_recon_report(report: ReconReport, out_dir: str | Path) -> List[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "rmse_per_channel.csv", out / "summary.json"]
    report.frame().to_csv(paths[0], index=False)
    write_json(paths[1], report.summary())
    for tile_id, grid in report.pixel_mse.items():
        p = out / f"pixel_mse_{tile_id}.csv"
        pd.DataFrame(grid).to_csv(p, index=False, header=False)
        paths.append(p)
    return paths
