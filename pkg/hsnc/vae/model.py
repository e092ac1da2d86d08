"""Encoder, reparameterization, decoder and supervision heads."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict

from ..errors import DimensionError
from ..models import VaeConfig
from ..tensor import layers, ops
from ..tensor.core import Tensor
from ..tensor.rng import RngState
from .params import VaeParams


@dataclass
class GaussianLatent:
    mu: Tensor
    logvar: Tensor


def _check_shape(x: Tensor, expected, what: str) -> None:
    if x.ndim != 4:
        raise DimensionError(f"{what} must be [B, C, H, W], got shape {x.shape}", axis="rank")
    for axis, got, want in zip(("channel", "height", "width"), x.shape[1:], expected):
        if got != want:
            raise DimensionError(f"{what} has {axis} extent {got}, config expects {want}", axis=axis)


def _conv(x: Tensor, p: VaeParams, name: str, stride: int = 1, padding: int = 0) -> Tensor:
    return layers.conv2d(x, p[f"{name}.w"], p[f"{name}.b"], stride=stride, padding=padding)


def _norm_act(x: Tensor, p: VaeParams, name: str, cfg: VaeConfig) -> Tensor:
    h = layers.group_norm(x, cfg.groups, p[f"{name}.g"], p[f"{name}.b"], eps=cfg.gn_eps)
    return layers.activation(h, "gelu")


def resblock(x: Tensor, p: VaeParams, name: str, cfg: VaeConfig) -> Tensor:
    h = _conv(_norm_act(x, p, f"{name}.norm1", cfg), p, f"{name}.conv1", padding=1)
    h = _conv(_norm_act(h, p, f"{name}.norm2", cfg), p, f"{name}.conv2", padding=1)
    skip = _conv(x, p, f"{name}.skip") if f"{name}.skip.w" in p else x
    return ops.add(skip, h)


def middle(x: Tensor, p: VaeParams, name: str, cfg: VaeConfig) -> Tensor:
    h = resblock(x, p, f"{name}.res1", cfg)
    a = f"{name}.attn"
    h = layers.self_attention(h, cfg.attn_heads, p[f"{a}.wq"], p[f"{a}.wk"], p[f"{a}.wv"], p[f"{a}.wo"])
    return resblock(h, p, f"{name}.res2", cfg)


def encode(x: Tensor, params: VaeParams, cfg: VaeConfig) -> GaussianLatent:
    _check_shape(x, cfg.input_shape, "encoder input")
    h = _conv(x, params, "enc.conv_in", padding=1)
    for i in range(len(cfg.enc_channels)):
        h = resblock(h, params, f"enc.level{i}.res", cfg)
        if i < cfg.n_down:
            h = _conv(h, params, f"enc.level{i}.down", stride=2)
    h = middle(h, params, "enc.mid", cfg)
    moments = _conv(h, params, "enc.out", padding=1)
    mu, logvar = ops.split_channels(moments, cfg.latent_channels)
    lo, hi = cfg.logvar_clamp
    return GaussianLatent(mu, ops.clamp(logvar, lo, hi))


def reparameterize(lat: GaussianLatent, rng: RngState, training: bool = True) -> Tensor:
    """z = mu + exp(logvar / 2)·eps; evaluation returns mu."""
    if not training:
        return lat.mu
    eps = Tensor(rng.normal(lat.mu.shape, dtype=lat.mu.dtype), dtype=lat.mu.dtype)
    return ops.add(lat.mu, ops.mul(ops.exp(ops.mul(lat.logvar, 0.5)), eps))


def decode(z: Tensor, params: VaeParams, cfg: VaeConfig) -> Tensor:
    _check_shape(z, cfg.latent_shape, "decoder input")
    h = _conv(z, params, "dec.conv_in", padding=1)
    h = middle(h, params, "dec.mid", cfg)
    for j in range(cfg.n_down):
        h = resblock(h, params, f"dec.level{j}.res", cfg)
        h = layers.conv_transpose2d(h, params[f"dec.level{j}.up.w"], params[f"dec.level{j}.up.b"], stride=2)
    h = resblock(h, params, "dec.final", cfg)
    return _conv(h, params, "dec.conv_out", padding=1)


def supervised_forward(lat: GaussianLatent, params: VaeParams, cfg: VaeConfig) -> Dict[str, Tensor]:
    """Per-product 1×1 heads on the latent mean, each [B, 1, h, w]."""
    return {p: _conv(lat.mu, params, f"head.{p}") for p in cfg.head_products}


def reconstruct(x: Tensor, params: VaeParams, cfg: VaeConfig) -> Tensor:
    """Evaluation-mode round trip: decode(mu)."""
    return decode(encode(x, params, cfg).mu, params, cfg)
