"""Radiance and Level-2 product normalization with exact inverses."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Literal, Mapping, Optional, Sequence

import numpy as np
from scipy.stats import median_abs_deviation

from .dataio.tile import HyperspectralTile, L2ProductSet
from .errors import DataError, DegenerateDistributionError, DomainError, FormatError
from .models import PRODUCTS, NormKind
from .utils import read_json, write_json

logger = logging.getLogger(__name__)

Direction = Literal["forward", "inverse"]

STATS_VERSION = 1
SIGMA_FLOOR = 1e-8
CLIP = 10.0
MAD_TO_STD = 1.4826
LOGIT_EPS = 0.01
LOGIT_TOL = 1e-9

# product -> (normalizer kind, unit scale applied before normalizing)
PRODUCT_SPECS: Dict[str, tuple] = {
    "no2": ("asinh", 1e15),
    "o3": ("zscore", 1.0),
    "hcho": ("asinh", 1e16),
    "cloud": ("logit", 1.0),
}


@dataclass
class RadianceStats:
    mu: np.ndarray
    sigma: np.ndarray
    pixel_count: int
    source_ids: List[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.mu = np.asarray(self.mu, dtype=np.float32)
        self.sigma = np.asarray(self.sigma, dtype=np.float32)
        if self.mu.shape != self.sigma.shape or self.mu.ndim != 1:
            raise DataError("radiance stats: mu and sigma must be equal-length 1-D arrays")
        if np.any(self.sigma < 0):
            raise DataError("radiance stats: sigma must be >= 0")

    @property
    def channels(self) -> int:
        return int(self.mu.shape[0])

    def to_json(self) -> dict:
        return {
            "version": STATS_VERSION,
            "channels": self.channels,
            "mu": [float(f"{v:.9g}") for v in self.mu],
            "sigma": [float(f"{v:.9g}") for v in self.sigma],
            "pixel_count": int(self.pixel_count),
            "source_ids": list(self.source_ids),
        }

    @classmethod
    def from_json(cls, d: Mapping) -> "RadianceStats":
        if d.get("version") != STATS_VERSION:
            raise FormatError(f"unsupported stats version {d.get('version')!r}")
        stats = cls(np.array(d["mu"], dtype=np.float64), np.array(d["sigma"], dtype=np.float64),
                    int(d["pixel_count"]), list(d.get("source_ids", [])))
        if stats.channels != int(d["channels"]):
            raise FormatError(f"stats declare {d['channels']} channels but carry {stats.channels}")
        return stats


def save_radiance_stats(stats: RadianceStats, path: str | Path) -> None:
    write_json(path, stats.to_json())


def load_radiance_stats(path: str | Path) -> RadianceStats:
    return RadianceStats.from_json(read_json(path))


def _log_radiance(data: np.ndarray) -> np.ndarray:
    return np.log(np.maximum(data.astype(np.float64), 1.0))


def compute_radiance_stats(tiles: Iterable[HyperspectralTile]) -> RadianceStats:
    """Per-channel mean and population std of log(max(r, 1)) in one pass.

    Tiles are folded in with the pairwise (Chan) form of Welford's update, in
    arrival order, so the result does not depend on thread count.
    """
    count = 0
    mean: Optional[np.ndarray] = None
    m2: Optional[np.ndarray] = None
    ids: List[str] = []
    for tile in tiles:
        logs = _log_radiance(tile.data).reshape(tile.channels, -1)
        if mean is None:
            mean = np.zeros(tile.channels)
            m2 = np.zeros(tile.channels)
        elif tile.channels != mean.shape[0]:
            raise DataError(f"tile {tile.id} has {tile.channels} channels, expected {mean.shape[0]}")
        n_b = logs.shape[1]
        mean_b = logs.mean(axis=1)
        m2_b = ((logs - mean_b[:, None]) ** 2).sum(axis=1)
        total = count + n_b
        delta = mean_b - mean
        mean = mean + delta * (n_b / total)
        m2 = m2 + m2_b + delta * delta * (count * n_b / total)
        count = total
        ids.append(tile.id)
    if mean is None:
        raise DataError("compute_radiance_stats needs at least one tile")
    logger.info("radiance stats over %d tiles, %d pixels", len(ids), count)
    return RadianceStats(mean, np.sqrt(m2 / count), count, ids)


def transform_radiance(tile: HyperspectralTile, stats: RadianceStats, direction: Direction) -> HyperspectralTile:
    if tile.channels != stats.channels:
        raise DataError(f"tile {tile.id} has {tile.channels} channels, stats have {stats.channels}")
    mu = stats.mu.astype(np.float64)[:, None, None]
    denom = stats.sigma.astype(np.float64)[:, None, None] + SIGMA_FLOOR
    if direction == "forward":
        z = np.clip((_log_radiance(tile.data) - mu) / denom, -CLIP, CLIP)
        return HyperspectralTile(tile.id, z.astype(np.float32), "normalized")
    if direction == "inverse":
        r = np.exp(tile.data.astype(np.float64) * denom + mu)
        return HyperspectralTile(tile.id, r.astype(np.float32), "raw")
    raise DataError(f"unknown direction {direction!r}")


def normalize_batch(data: np.ndarray, stats: RadianceStats) -> np.ndarray:
    """Forward transform of a raw [B, C, H, W] or [C, H, W] array."""
    shape = (-1, 1, 1)
    mu = stats.mu.astype(np.float64).reshape(shape)
    denom = stats.sigma.astype(np.float64).reshape(shape) + SIGMA_FLOOR
    return np.clip((_log_radiance(data) - mu) / denom, -CLIP, CLIP).astype(np.float32)


def denormalize_batch(z: np.ndarray, stats: RadianceStats) -> np.ndarray:
    shape = (-1, 1, 1)
    mu = stats.mu.astype(np.float64).reshape(shape)
    denom = stats.sigma.astype(np.float64).reshape(shape) + SIGMA_FLOOR
    return np.exp(z.astype(np.float64) * denom + mu).astype(np.float32)


@dataclass
class L2Normalizer:
    kind: NormKind
    unit_scale: float = 1.0
    scale: float = 1.0
    mu: float = 0.0
    sigma: float = 1.0
    epsilon: float = LOGIT_EPS
    product: Optional[str] = None

    def __post_init__(self) -> None:
        if self.unit_scale <= 0:
            raise DataError("unit_scale must be > 0")
        if self.kind == "asinh" and not self.scale > 0:
            raise DegenerateDistributionError("asinh scale must be > 0")
        if self.kind == "zscore" and not self.sigma > 0:
            raise DegenerateDistributionError("zscore sigma must be > 0")
        if self.kind == "logit" and not 0.0 < self.epsilon < 0.5:
            raise DataError("logit epsilon must lie in (0, 0.5)")

    def params(self) -> dict:
        if self.kind == "asinh":
            return {"s": self.scale}
        if self.kind == "zscore":
            return {"mu": self.mu, "sigma": self.sigma}
        return {"epsilon": self.epsilon}

    def to_json(self) -> dict:
        return {"product": self.product, "kind": self.kind, "unit_scale": self.unit_scale, "params": self.params()}

    @classmethod
    def from_json(cls, d: Mapping) -> "L2Normalizer":
        p = d.get("params", {})
        return cls(kind=d["kind"], unit_scale=float(d.get("unit_scale", 1.0)),
                   scale=float(p.get("s", 1.0)), mu=float(p.get("mu", 0.0)), sigma=float(p.get("sigma", 1.0)),
                   epsilon=float(p.get("epsilon", LOGIT_EPS)), product=d.get("product"))


def fit_l2_normalizer(values: np.ndarray, kind: NormKind, unit_scale: float = 1.0,
                      product: Optional[str] = None) -> L2Normalizer:
    x = np.asarray(values, dtype=np.float64).reshape(-1)
    x = x[np.isfinite(x)] / unit_scale
    if kind == "logit":
        return L2Normalizer("logit", unit_scale=unit_scale, epsilon=LOGIT_EPS, product=product)
    if x.size < 2:
        raise DegenerateDistributionError(f"{product or kind}: need at least 2 finite values, got {x.size}")
    if kind == "asinh":
        mad = float(median_abs_deviation(x))
        if mad == 0:
            raise DegenerateDistributionError(f"{product or kind}: median absolute deviation is 0")
        return L2Normalizer("asinh", unit_scale=unit_scale, scale=float(MAD_TO_STD * mad), product=product)
    if kind == "zscore":
        sigma = float(x.std())
        if sigma == 0:
            raise DegenerateDistributionError(f"{product or kind}: standard deviation is 0")
        return L2Normalizer("zscore", unit_scale=unit_scale, mu=float(x.mean()), sigma=sigma, product=product)
    raise DataError(f"unknown normalizer kind {kind!r}")


def transform_l2(x: np.ndarray, n: L2Normalizer, direction: Direction) -> np.ndarray:
    """Apply a product normalizer; NaN maps to NaN both ways."""
    v = np.asarray(x, dtype=np.float64)
    if direction == "forward":
        u = v / n.unit_scale
        if n.kind == "asinh":
            return np.arcsinh(u / n.scale)
        if n.kind == "zscore":
            return (u - n.mu) / n.sigma
        finite = u[np.isfinite(u)]
        if finite.size and (finite.min() < -LOGIT_TOL or finite.max() > 1.0 + LOGIT_TOL):
            raise DomainError(f"logit input outside [0, 1]: range [{finite.min()}, {finite.max()}]")
        q = n.epsilon + (1.0 - 2.0 * n.epsilon) * np.clip(u, 0.0, 1.0)
        return np.log(q / (1.0 - q))
    if direction == "inverse":
        if n.kind == "asinh":
            u = n.scale * np.sinh(v)
        elif n.kind == "zscore":
            u = v * n.sigma + n.mu
        else:
            u = (1.0 / (1.0 + np.exp(-v)) - n.epsilon) / (1.0 - 2.0 * n.epsilon)
        return u * n.unit_scale
    raise DataError(f"unknown direction {direction!r}")


def pool_l2(values: np.ndarray, factor: int = 4) -> np.ndarray:
    """Mean of the valid pixels in each factor×factor block; NaN when none are valid."""
    m = np.asarray(values, dtype=np.float64)
    if m.ndim != 2:
        raise DataError(f"pool_l2 expects a 2-D map, got shape {m.shape}")
    H, W = m.shape
    if factor < 1 or H % factor or W % factor:
        raise DataError(f"pool_l2: map {H}x{W} not divisible by factor {factor}")
    blocks = m.reshape(H // factor, factor, W // factor, factor)
    valid = np.isfinite(blocks)
    total = np.where(valid, blocks, 0.0).sum(axis=(1, 3))
    n = valid.sum(axis=(1, 3))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return np.where(n > 0, total / np.maximum(n, 1), np.nan)


def fit_l2_normalizers(l2sets: Iterable[L2ProductSet], train_ids: Sequence[str],
                       products: Sequence[str] = PRODUCTS) -> Dict[str, L2Normalizer]:
    """Fit one normalizer per product on the training split only."""
    train = set(train_ids)
    chunks: Dict[str, List[np.ndarray]] = {p: [] for p in products}
    for s in l2sets:
        if s.id not in train:
            continue
        for p in products:
            if p in s.products:
                chunks[p].append(s[p].reshape(-1))
    out = {}
    for p in products:
        kind, unit = PRODUCT_SPECS[p]
        values = np.concatenate(chunks[p]) if chunks[p] else np.empty(0)
        out[p] = fit_l2_normalizer(values, kind, unit, product=p)
        logger.info("fitted %s normalizer for %s: %s", kind, p, out[p].params())
    return out


def save_l2_normalizers(normalizers: Mapping[str, L2Normalizer], path: str | Path) -> None:
    write_json(path, {"version": STATS_VERSION,
                      "normalizers": [dict(n.to_json(), product=p) for p, n in normalizers.items()]})


def load_l2_normalizers(path: str | Path) -> Dict[str, L2Normalizer]:
    d = read_json(path)
    if d.get("version") != STATS_VERSION:
        raise FormatError(f"unsupported normalizer file version {d.get('version')!r}")
    return {e["product"]: L2Normalizer.from_json(e) for e in d["normalizers"]}


def pooled_targets(l2set: L2ProductSet, normalizers: Mapping[str, L2Normalizer],
                   factor: int, products: Sequence[str]) -> Dict[str, np.ndarray]:
    """Pool each raw product to latent resolution, then normalize it."""
    out = {}
    for p in products:
        if p not in l2set.products:
            raise DataError(f"L2 set {l2set.id} lacks product {p}")
        out[p] = transform_l2(pool_l2(l2set[p], factor), normalizers[p], "forward").astype(np.float32)
    return out
