from __future__ import annotations

import logging
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from ..errors import DataError
from ..models import SynthConfig
from ..utils import read_json
from .cache import TileCache
from .formats import read_l2, read_tile
from .split import SplitAssignment, split_files
from .synth import SpectralTemplates
from .tile import HyperspectralTile, L2ProductSet

logger = logging.getLogger(__name__)


class Dataset:
    """A dataset directory: tiles/<id>.hst, l2/<id>.hsl2, split.json, synth.json, truth/."""

    def __init__(self, root: str | Path, cache_items: int = 1024):
        self.root = Path(root)
        if not (self.root / "tiles").is_dir():
            raise DataError(f"{self.root} is not a dataset directory (no tiles/)")
        self.cache = TileCache(cache_items)
        self._ids: Optional[List[str]] = None

    def ids(self) -> List[str]:
        if self._ids is None:
            self._ids = sorted(p.stem for p in (self.root / "tiles").glob("*.hst"))
        return list(self._ids)

    def tile(self, tile_id: str) -> HyperspectralTile:
        cached = self.cache.get(tile_id)
        if cached is not None:
            return cached
        path = self.root / "tiles" / f"{tile_id}.hst"
        if not path.exists():
            raise DataError(f"unknown tile {tile_id!r} in {self.root}")
        tile = read_tile(path)
        self.cache.set(tile_id, tile)
        return tile

    def l2(self, tile_id: str) -> L2ProductSet:
        path = self.root / "l2" / f"{tile_id}.hsl2"
        if not path.exists():
            raise DataError(f"no L2 products for tile {tile_id!r} in {self.root}")
        return read_l2(path)

    def stack(self, tile_ids: Sequence[str]) -> np.ndarray:
        return np.stack([self.tile(i).data for i in tile_ids])

    def split(self, train_pct: int = 70) -> SplitAssignment:
        path = self.root / "split.json"
        if path.exists():
            split = SplitAssignment.from_json(read_json(path))
            if abs(split.ratio - train_pct / 100.0) < 1e-12:
                return split
            logger.info("split.json was written for ratio %.2f; recomputing at %d%%", split.ratio, train_pct)
        return split_files(self.ids(), train_pct)

    def synth_config(self) -> Optional[SynthConfig]:
        path = self.root / "synth.json"
        return SynthConfig.model_validate(read_json(path)) if path.exists() else None

    def templates(self) -> Optional[SpectralTemplates]:
        path = self.root / "truth" / "templates.json"
        return SpectralTemplates.from_json(read_json(path)) if path.exists() else None

    def __len__(self) -> int:
        return len(self.ids())
