"""Decoupled-weight-decay Adam and global-norm clipping."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Mapping, MutableMapping, Optional

import numpy as np

from ..errors import TrainingFault
from ..models import TrainConfig
from ..tensor.core import Tensor


@dataclass
class OptimState:
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0

    @classmethod
    def zeros(cls, params: Mapping[str, Tensor]) -> "OptimState":
        return cls({k: np.zeros_like(p.data, dtype=np.float32) for k, p in params.items()},
                   {k: np.zeros_like(p.data, dtype=np.float32) for k, p in params.items()}, 0)

    def to_blobs(self) -> Dict[str, np.ndarray]:
        out = {f"m/{k}": a for k, a in self.m.items()}
        out.update({f"v/{k}": a for k, a in self.v.items()})
        return out

    @classmethod
    def from_blobs(cls, blobs: Mapping[str, np.ndarray], t: int) -> "OptimState":
        m = {k[2:]: np.asarray(a, dtype=np.float32) for k, a in blobs.items() if k.startswith("m/")}
        v = {k[2:]: np.asarray(a, dtype=np.float32) for k, a in blobs.items() if k.startswith("v/")}
        return cls(m, v, int(t))


def global_norm(grads: Mapping[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values())))


def clip_grad_norm(grads: MutableMapping[str, np.ndarray], max_norm: float, step: Optional[int] = None) -> float:
    """Scale all gradients jointly so their global L2 norm is at most ``max_norm``; returns the scale."""
    for name, g in grads.items():
        if not np.isfinite(g).all():
            raise TrainingFault(f"non-finite gradient in {name}", step=step)
    norm = global_norm(grads)
    scale = 1.0 if norm <= max_norm or norm == 0.0 else max_norm / norm
    if scale < 1.0:
        for name, g in grads.items():
            grads[name] = (g * scale).astype(g.dtype)
    return scale


def _decays(name: str, p: np.ndarray, cfg: TrainConfig) -> bool:
    return cfg.decay_all or (p.ndim > 1 and name != "log_s2")


def adamw_step(params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray], state: OptimState,
               cfg: TrainConfig) -> None:
    """One AdamW update in place: θ ← θ − lr·(m̂/(√v̂ + ε) + wd·θ)."""
    b1, b2 = cfg.betas
    state.t += 1
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        m = b1 * state.m[name] + (1.0 - b1) * g
        v = b2 * state.v[name] + (1.0 - b2) * g * g
        state.m[name] = m.astype(np.float32)
        state.v[name] = v.astype(np.float32)
        update = (m / c1) / (np.sqrt(v / c2) + cfg.adam_eps)
        if cfg.weight_decay and _decays(name, p.data, cfg):
            update = update + cfg.weight_decay * p.data
        p.data = (p.data - cfg.lr * update).astype(p.data.dtype)
