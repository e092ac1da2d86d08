from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..dataio.tile import HyperspectralTile, L2ProductSet
from ..errors import DataError
from ..models import ProbeConfig, VaeConfig
from ..normalize import L2Normalizer, RadianceStats, pooled_targets, transform_radiance
from ..tensor.core import Tensor
from ..tensor.rng import RngState
from ..vae import VaeParams, encode

logger = logging.getLogger(__name__)


@dataclass
class ProbeDataset:
    features: np.ndarray
    targets: np.ndarray
    tile_ids: List[str] = field(default_factory=list)
    ys: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    xs: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float32)
        self.targets = np.asarray(self.targets, dtype=np.float32)
        if self.features.ndim != 2 or len(self.features) != len(self.targets):
            raise DataError(f"probe features {self.features.shape} and targets {self.targets.shape} disagree")
        if not np.isfinite(self.targets).all():
            raise DataError("probe targets must not contain NaN")

    def __len__(self) -> int:
        return len(self.targets)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, idx: np.ndarray) -> "ProbeDataset":
        return ProbeDataset(self.features[idx], self.targets[idx],
                            [self.tile_ids[i] for i in idx] if self.tile_ids else [],
                            self.ys[idx] if len(self.ys) else self.ys, self.xs[idx] if len(self.xs) else self.xs)


def encode_latents(params: VaeParams, cfg: VaeConfig, tiles: Sequence[HyperspectralTile],
                   stats: Optional[RadianceStats]) -> np.ndarray:
    """Latent means [N, c, h, w] in evaluation mode; raw tiles are normalized first.

    Each tile is encoded as its own batch of one, the same call ``compress``
    makes, so a stored feature equals a later re-encode of its tile bit for bit.
    """
    out = np.empty((len(tiles),) + cfg.latent_shape, dtype=np.float32)
    for i, tile in enumerate(tiles):
        if tile.space == "raw":
            if stats is None:
                raise DataError("raw tiles need radiance stats to be normalized")
            tile = transform_radiance(tile, stats, "forward")
        out[i] = encode(Tensor(tile.data[None]), params, cfg).mu.data[0]
    return out


def build_probe_dataset(params: VaeParams, cfg: VaeConfig, tiles: Sequence[HyperspectralTile],
                        l2sets: Sequence[L2ProductSet], probe_cfg: ProbeConfig, product: str, rng: RngState,
                        stats: Optional[RadianceStats] = None,
                        normalizers: Optional[Mapping[str, L2Normalizer]] = None,
                        latents: Optional[np.ndarray] = None) -> Tuple[ProbeDataset, ProbeDataset]:
    """Pair latent-mean pixel vectors with normalized pooled targets and split rows 80/20.

    Up to ``pixels_per_file`` valid pixels are drawn per file without
    replacement; ``latents`` may carry precomputed means to skip encoding.
    """
    if len(tiles) != len(l2sets):
        raise DataError(f"{len(tiles)} tiles but {len(l2sets)} L2 sets")
    if normalizers is None:
        raise DataError("build_probe_dataset needs fitted L2 normalizers")
    mus = latents if latents is not None else encode_latents(params, cfg, tiles, stats)
    factor = cfg.tile // cfg.latent_size
    pick_rng = rng.split("pixels")
    feats, targs, ids, ys, xs = [], [], [], [], []
    for tile, l2, mu in zip(tiles, l2sets, mus):
        if l2.h % factor or l2.w % factor or (l2.h // factor, l2.w // factor) != mu.shape[1:]:
            raise DataError(f"{l2.id}: pooled L2 {l2.h}x{l2.w}/{factor} does not match latent {mu.shape[1:]}")
        target = pooled_targets(l2, normalizers, factor, [product])[product]
        valid = np.flatnonzero(np.isfinite(target))
        if valid.size == 0:
            continue
        k = min(probe_cfg.pixels_per_file, valid.size)
        sel = pick_rng.generator.choice(valid, size=k, replace=False)
        yy, xx = np.unravel_index(sel, target.shape)
        feats.append(mu[:, yy, xx].T)
        targs.append(target[yy, xx])
        ids.extend([tile.id] * k)
        ys.append(yy)
        xs.append(xx)
    if not feats:
        raise DataError(f"no valid {product} pixels across {len(tiles)} files")
    full = ProbeDataset(np.concatenate(feats), np.concatenate(targs), ids, np.concatenate(ys), np.concatenate(xs))
    order = rng.split("split").generator.permutation(len(full))
    n_train = int(round(probe_cfg.train_frac * len(full)))
    logger.info("probe dataset %s: %d rows (%d train / %d test)", product, len(full), n_train, len(full) - n_train)
    return full.subset(order[:n_train]), full.subset(order[n_train:])
