from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from ..errors import DataError
from ..models import VaeConfig
from ..tensor import ops
from ..tensor.core import Tensor
from .model import GaussianLatent

logger = logging.getLogger(__name__)

HEAD_WEIGHT = 1.0


@dataclass
class LossTerms:
    rec: Tensor
    nll: Tensor
    kl: Tensor
    total: Tensor
    pixel_mse: float
    product_mse: Dict[str, Tensor] = field(default_factory=dict)

    def values(self) -> Dict[str, float]:
        out = {"rec": self.rec.item(), "nll": self.nll.item(), "kl": self.kl.item(),
               "total": self.total.item(), "pixel_mse": self.pixel_mse}
        for p, t in self.product_mse.items():
            out[f"mse_{p}"] = t.item()
        return out


def kl_divergence(lat: GaussianLatent) -> Tensor:
    """Mean over the batch of -0.5·Σ(1 + logvar - mu² - exp(logvar))."""
    terms = ops.sub(ops.sub(ops.add(lat.logvar, 1.0), ops.square(lat.mu)), ops.exp(lat.logvar))
    per_sample = ops.sum(terms, axis=tuple(range(1, lat.mu.ndim)))
    return ops.mul(ops.mean(per_sample), -0.5)


def kl_divergence_reference(mu: np.ndarray, logvar: np.ndarray) -> float:
    """0.5·Σ(mu² + σ² - 1 - log σ²), batch-averaged, in float64."""
    mu = np.asarray(mu, dtype=np.float64)
    logvar = np.asarray(logvar, dtype=np.float64)
    per = 0.5 * (mu ** 2 + np.exp(logvar) - 1.0 - logvar).reshape(mu.shape[0], -1).sum(axis=1)
    return float(per.mean())


def compute_losses(x: Tensor, xhat: Tensor, lat: GaussianLatent, log_s2: Tensor, cfg: VaeConfig) -> LossTerms:
    diff = ops.sub(x, xhat)
    rec = ops.mean(ops.abs(diff))
    nll = ops.add(ops.div(rec, ops.exp(log_s2)), log_s2)
    kl = kl_divergence(lat)
    total = ops.add(nll, ops.mul(kl, cfg.kl_weight))
    pixel_mse = float(np.mean(np.square(diff.data, dtype=np.float64)))
    return LossTerms(rec, nll, kl, total, pixel_mse)


def masked_mse(pred: Tensor, target: np.ndarray) -> Tuple[Tensor, int]:
    """MSE over the finite entries of ``target`` ([B, h, w]); zero when none are finite."""
    target = np.asarray(target, dtype=pred.dtype)
    if target.ndim == pred.ndim - 1:
        target = target[:, None]
    if target.shape != pred.shape:
        raise DataError(f"target resolution {target.shape[-2:]} does not match head output {pred.shape[-2:]}")
    mask = np.isfinite(target)
    n = int(mask.sum())
    if n == 0:
        return Tensor(np.zeros((), dtype=pred.dtype)), 0
    m = Tensor(mask.astype(pred.dtype))
    t = Tensor(np.where(mask, target, 0).astype(pred.dtype))
    sq = ops.square(ops.mul(ops.sub(pred, t), m))
    return ops.mul(ops.sum(sq), 1.0 / n), n


def add_supervision(terms: LossTerms, heads: Mapping[str, Tensor], targets: Mapping[str, np.ndarray],
                    weights: Optional[Mapping[str, float]] = None) -> LossTerms:
    """Fold per-product masked MSE into ``terms.total`` with weight 1 per product by default."""
    total = terms.total
    for p, pred in heads.items():
        mse, n = masked_mse(pred, targets[p])
        if n == 0:
            logger.warning("supervision target %s has no valid pixels in this batch", p)
        terms.product_mse[p] = mse
        w = HEAD_WEIGHT if weights is None else weights.get(p, HEAD_WEIGHT)
        total = ops.add(total, ops.mul(mse, w))
    terms.total = total
    return terms
