from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from ..errors import UsageError
from ..models import ProbeKind
from ..tensor import layers, ops
from ..tensor.core import Tensor
from ..tensor.rng import RngState


@dataclass
class ProbeModel:
    kind: ProbeKind
    params: Dict[str, Tensor]
    dropout: float = 0.0
    best_epoch: int = 0

    def copy(self) -> "ProbeModel":
        return ProbeModel(self.kind, {k: Tensor(t.data.copy(), requires_grad=t.requires_grad)
                                      for k, t in self.params.items()}, self.dropout, self.best_epoch)

    def num_params(self) -> int:
        return int(sum(t.size for t in self.params.values()))

    def linear_weights(self) -> Optional[List[float]]:
        return self.params["w"].data.reshape(-1).tolist() if self.kind == "linear" else None


def _layer(params: Dict[str, Tensor], rng: RngState, suffix: str, din: int, dout: int) -> None:
    bound = 1.0 / np.sqrt(din)
    params[f"w{suffix}"] = Tensor(rng.split(f"w{suffix}").uniform((dout, din), -bound, bound),
                                  requires_grad=True, dtype=np.float32)
    params[f"b{suffix}"] = Tensor(rng.split(f"b{suffix}").uniform((dout,), -bound, bound),
                                  requires_grad=True, dtype=np.float32)


def init_probe(kind: ProbeKind, dim: int, rng: RngState, hidden: Optional[List[int]] = None,
               dropout: float = 0.0) -> ProbeModel:
    params: Dict[str, Tensor] = {}
    if kind == "linear":
        _layer(params, rng, "", dim, 1)
        return ProbeModel(kind, params, 0.0)
    h1, h2 = hidden or [512, 512]
    _layer(params, rng, "1", dim, h1)
    _layer(params, rng, "2", h1, h2)
    _layer(params, rng, "3", h2, 1)
    return ProbeModel(kind, params, dropout)


def probe_forward(model: ProbeModel, z, training: bool = False, rng: Optional[RngState] = None) -> Tensor:
    """Predictions for latent vectors ``z`` ([N, c] → [N]; a single [c] vector gives shape [1])."""
    x = z if isinstance(z, Tensor) else Tensor(np.atleast_2d(np.asarray(z, dtype=np.float32)))
    p = model.params
    if model.kind == "linear":
        y = layers.linear(x, p["w"], p["b"])
    else:
        h1 = layers.activation(layers.linear(x, p["w1"], p["b1"]), "relu")
        h2 = layers.activation(layers.linear(h1, p["w2"], p["b2"]), "relu")
        if training and model.dropout > 0:
            if rng is None:
                raise UsageError("training-mode dropout needs an rng")
            h2 = layers.dropout(h2, model.dropout, True, rng)
        y = layers.linear(h2, p["w3"], p["b3"])
    return ops.reshape(y, (y.shape[0],))


def predict(model: ProbeModel, features: np.ndarray, batch: int = 4096) -> np.ndarray:
    out = [probe_forward(model, features[i: i + batch]).data for i in range(0, len(features), batch)]
    return np.concatenate(out) if out else np.empty(0, dtype=np.float32)
