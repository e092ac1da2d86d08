from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Literal

import numpy as np

from ..errors import DataError
from ..models import PRODUCTS, NormKind

Space = Literal["raw", "normalized"]


@dataclass
class HyperspectralTile:
    """A C×H×W radiance cube, channel-major float32."""

    id: str
    data: np.ndarray
    space: Space = "raw"

    def __post_init__(self) -> None:
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.data.ndim != 3 or min(self.data.shape) < 1:
            raise DataError(f"tile {self.id}: expected a non-empty C×H×W array, got shape {self.data.shape}")
        if self.space not in ("raw", "normalized"):
            raise DataError(f"tile {self.id}: unknown space {self.space!r}")
        if self.space == "raw" and np.any(self.data < 0):
            raise DataError(f"tile {self.id}: raw radiance must be >= 0")

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self):
        return self.data.shape


@dataclass
class L2Product:
    values: np.ndarray
    kind: NormKind


@dataclass
class L2ProductSet:
    """Level-2 product maps aligned with one tile; NaN marks invalid pixels."""

    id: str
    products: Dict[str, L2Product] = field(default_factory=dict)

    def __post_init__(self) -> None:
        shapes = set()
        for name, prod in self.products.items():
            if name not in PRODUCTS:
                raise DataError(f"L2 set {self.id}: unknown product {name!r}")
            prod.values = np.ascontiguousarray(prod.values, dtype=np.float32)
            if prod.values.ndim != 2:
                raise DataError(f"L2 set {self.id}: product {name} must be 2-D")
            shapes.add(prod.values.shape)
        if len(shapes) > 1:
            raise DataError(f"L2 set {self.id}: product maps disagree in shape {sorted(shapes)}")
        cloud = self.products.get("cloud")
        if cloud is not None:
            v = cloud.values[np.isfinite(cloud.values)]
            if v.size and (v.min() < 0.0 or v.max() > 1.0):
                raise DataError(f"L2 set {self.id}: cloud fraction outside [0, 1]")

    @property
    def h(self) -> int:
        return next(iter(self.products.values())).values.shape[0] if self.products else 0

    @property
    def w(self) -> int:
        return next(iter(self.products.values())).values.shape[1] if self.products else 0

    def __getitem__(self, name: str) -> np.ndarray:
        return self.products[name].values
