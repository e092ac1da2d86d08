from __future__ import annotations

import hashlib
import json
from typing import Any, Dict, List, Literal, Optional, Tuple, Type, TypeVar

from pydantic import BaseModel, Field, ValidationError, model_validator

from .errors import ConfigurationError

ProductName = Literal["no2", "o3", "hcho", "cloud"]
NormKind = Literal["asinh", "zscore", "logit"]
ProbeKind = Literal["linear", "mlp"]

PRODUCTS: Tuple[str, ...] = ("no2", "o3", "hcho", "cloud")

# TrainConfig fields that set the step budget or reporting cadence only
TRAIN_CADENCE_FIELDS = frozenset({"steps", "val_every", "ckpt_every", "log_every"})

T = TypeVar("T", bound=BaseModel)


class _Checked(BaseModel):
    """Models whose invariants are listed by ``problems()``."""

    def problems(self) -> List[str]:
        return []

    @model_validator(mode="after")
    def _validate(self):
        issues = self.problems()
        if issues:
            raise ValueError("; ".join(issues))
        return self

    def ensure_valid(self) -> None:
        issues = self.problems()
        if issues:
            raise ConfigurationError(f"{type(self).__name__}: {'; '.join(issues)}")

    def config_hash(self, exclude: Optional[frozenset] = None) -> str:
        blob = json.dumps(self.model_dump(mode="json", exclude=set(exclude) if exclude else None),
                          sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]


def build_config(cls: Type[T], base: Optional[Dict[str, Any]] = None, **overrides: Any) -> T:
    """Merge ``base`` (e.g. a JSON file) with non-None ``overrides``; map errors to ConfigurationError."""
    data = dict(base or {})
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return cls.model_validate(data)
    except ValidationError as exc:
        details = "; ".join(f"{'.'.join(str(p) for p in e['loc']) or cls.__name__}: {e['msg']}" for e in exc.errors())
        raise ConfigurationError(f"{cls.__name__}: {details}") from None


class VaeConfig(_Checked):
    in_channels: int = 1028
    tile: int = 64
    enc_channels: List[int] = Field(default_factory=lambda: [512, 256, 128])
    n_down: int = 2
    latent_channels: int = 32
    attn_heads: int = 4
    groups: int = 8
    gn_eps: float = 1e-6
    kl_weight: float = 1e-6
    log_s2_init: float = 6.0
    logvar_clamp: Tuple[float, float] = (-30.0, 20.0)
    supervised: bool = False
    head_products: List[ProductName] = Field(default_factory=list)

    def problems(self) -> List[str]:
        out = []
        if min(self.in_channels, self.tile, self.latent_channels, self.attn_heads, self.groups) < 1:
            out.append("in_channels, tile, latent_channels, attn_heads and groups must be >= 1")
        if self.n_down < 0:
            out.append("n_down must be >= 0")
        if len(self.enc_channels) != self.n_down + 1:
            out.append(f"enc_channels has {len(self.enc_channels)} levels, n_down={self.n_down} needs {self.n_down + 1}")
        bad = [c for c in self.enc_channels if c < 1 or c % max(self.groups, 1)]
        if bad:
            out.append(f"channels {bad} not divisible by groups={self.groups}")
        if self.enc_channels and self.enc_channels[-1] % max(self.attn_heads, 1):
            out.append(f"attention channels {self.enc_channels[-1]} not divisible by heads={self.attn_heads}")
        if self.tile % (2 ** max(self.n_down, 0)) or self.tile // (2 ** max(self.n_down, 0)) < 1:
            out.append(f"tile {self.tile} not divisible by 2^{self.n_down}")
        if self.gn_eps <= 0:
            out.append("gn_eps must be > 0")
        lo, hi = self.logvar_clamp
        if lo >= hi:
            out.append("logvar_clamp must be increasing")
        if self.supervised and not self.head_products:
            out.append("supervised model needs head_products")
        return out

    @property
    def latent_size(self) -> int:
        return self.tile // (2 ** self.n_down)

    @property
    def input_shape(self) -> Tuple[int, int, int]:
        return self.in_channels, self.tile, self.tile

    @property
    def latent_shape(self) -> Tuple[int, int, int]:
        return self.latent_channels, self.latent_size, self.latent_size

    @classmethod
    def full(cls) -> "VaeConfig":
        return cls()

    @classmethod
    def desk(cls) -> "VaeConfig":
        return cls(in_channels=64, tile=32, enc_channels=[64, 32, 16], latent_channels=8)

    @classmethod
    def tiny(cls) -> "VaeConfig":
        return cls(in_channels=4, tile=8, enc_channels=[8, 8, 8], latent_channels=2)


class TrainConfig(_Checked):
    lr: float = 1e-4
    betas: Tuple[float, float] = (0.9, 0.95)
    weight_decay: float = 0.05
    adam_eps: float = 1e-8
    clip_norm: float = 1.0
    steps: int = 200_000
    batch: int = 32
    val_every: int = 50
    ckpt_every: int = 5000
    log_every: int = 50
    seed: int = 42
    # decoupled decay on every parameter; False exempts 1-D params and log_s2
    decay_all: bool = True

    def problems(self) -> List[str]:
        out = []
        if self.lr < 0 or self.weight_decay < 0 or self.adam_eps <= 0 or self.clip_norm <= 0:
            out.append("lr, weight_decay must be >= 0 and adam_eps, clip_norm > 0")
        if not all(0.0 < b < 1.0 for b in self.betas):
            out.append(f"betas {self.betas} must lie in (0, 1)")
        if self.steps < 0 or self.batch < 1 or self.val_every < 1 or self.ckpt_every < 1 or self.log_every < 1:
            out.append("steps >= 0; batch, val_every, ckpt_every, log_every >= 1")
        return out

    def trajectory_hash(self) -> str:
        """Hash of the fields that shape the optimization path; budget and cadence may change on resume."""
        return self.config_hash(exclude=TRAIN_CADENCE_FIELDS)

    @classmethod
    def desk(cls) -> "TrainConfig":
        return cls(steps=3000, batch=8)


class DataConfig(_Checked):
    data_dir: str = "data"
    stats_path: str = "data/stats.json"
    l2_norm_path: Optional[str] = None
    train_pct: int = 70
    train_buffer: int = 500
    val_buffer: int = 100

    def problems(self) -> List[str]:
        out = []
        if not 0 <= self.train_pct <= 100:
            out.append("train_pct must be within [0, 100]")
        if self.train_buffer < 1 or self.val_buffer < 1:
            out.append("buffer capacities must be >= 1")
        return out


class ProbeConfig(_Checked):
    kind: ProbeKind = "linear"
    hidden: List[int] = Field(default_factory=lambda: [512, 512])
    dropout: float = 0.0
    lr: float = 1e-3
    weight_decay: float = 0.01
    batch: int = 512
    max_epochs: int = 100
    patience: int = 10
    pixels_per_file: int = 2000
    train_frac: float = 0.8
    seed: int = 42

    def problems(self) -> List[str]:
        out = []
        if self.patience >= self.max_epochs:
            out.append(f"patience {self.patience} must be < max_epochs {self.max_epochs}")
        if self.pixels_per_file < 1 or self.batch < 1 or self.patience < 1:
            out.append("pixels_per_file, batch and patience must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            out.append("dropout must be in [0, 1)")
        if not 0.0 < self.train_frac < 1.0:
            out.append("train_frac must be in (0, 1)")
        if self.kind == "mlp" and len(self.hidden) != 2:
            out.append("mlp probes have exactly two hidden layers")
        return out

    @classmethod
    def linear(cls, **kw: Any) -> "ProbeConfig":
        return cls(**{"kind": "linear", "dropout": 0.0, "max_epochs": 100, "pixels_per_file": 2000, **kw})

    @classmethod
    def mlp(cls, **kw: Any) -> "ProbeConfig":
        return cls(**{"kind": "mlp", "dropout": 0.1, "max_epochs": 2000, "pixels_per_file": 1000, **kw})


class SynthConfig(_Checked):
    channels: int = 64
    tile: int = 32
    n_tiles: int = 2000
    n_absorbers: int = 3
    wavelength_nm: Tuple[float, float] = (290.0, 490.0)
    field_smoothness: float = 3.0
    cloud_smoothness: float = 4.0
    cloud_cover: float = 0.35
    noise: float = 0.01
    nan_fraction: float = 0.02
    radiance_scale: float = 1.0e4
    # multiplies every absorber field; 0 gives absorber-free scenes
    absorber_scale: float = 1.0
    seed: int = 42

    def problems(self) -> List[str]:
        out = []
        if self.channels < 4 or self.tile < 4 or self.n_tiles < 0:
            out.append("channels >= 4, tile >= 4, n_tiles >= 0 required")
        if self.n_absorbers != 3:
            out.append("exactly 3 absorber templates (no2, o3, hcho analogs) are generated")
        lo, hi = self.wavelength_nm
        if not 0 < lo < hi:
            out.append("wavelength range must be positive and increasing")
        if self.field_smoothness <= 0 or self.cloud_smoothness <= 0:
            out.append("smoothness scales must be > 0")
        if not 0.0 <= self.cloud_cover <= 1.0:
            out.append("cloud_cover must be within [0, 1]")
        if self.noise < 0:
            out.append("noise must be >= 0")
        if not 0.0 <= self.nan_fraction < 1.0:
            out.append("nan_fraction must be in [0, 1)")
        if self.radiance_scale <= 1.0:
            out.append("radiance_scale must exceed 1 so log(max(r, 1)) is informative")
        if self.absorber_scale < 0:
            out.append("absorber_scale must be >= 0")
        return out


class RunManifest(BaseModel):
    command: str
    config_hashes: Dict[str, str] = Field(default_factory=dict)
    config: Dict[str, Any] = Field(default_factory=dict)
    input_ids: List[str] = Field(default_factory=list)
    output_paths: List[str] = Field(default_factory=list)
    seed: Optional[int] = None
    tool_version: str = ""
    started_at: str = ""
    wall_time_s: float = 0.0


class ProbeReportEntry(BaseModel):
    product: ProductName
    kind: ProbeKind
    r2: float
    mse: float
    n_train: int
    n_test: int
    best_epoch: int
