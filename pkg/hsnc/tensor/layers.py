"""Layer primitives used by the VAE and the probes (B, C, H, W layout)."""
from __future__ import annotations

import math
from typing import Literal

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf

from ..errors import ConfigurationError, DimensionError
from . import ops
from .core import Function, Tensor
from .rng import RngState

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _out_size(n: int, k: int, stride: int, padding: int, axis: str) -> int:
    out = (n + 2 * padding - k) // stride + 1
    if out < 1:
        raise DimensionError(f"kernel {k} with stride {stride}, padding {padding} does not fit extent {n}", axis=axis)
    return out


class Conv2d(Function):
    """Cross-correlation via im2col and one matmul."""

    name = "conv2d"

    def forward(self, x, w, b, stride=1, padding=0):
        if x.ndim != 4:
            raise DimensionError(f"conv2d input must be 4-D, got shape {x.shape}", axis="rank")
        if w.ndim != 4 or w.shape[2] != w.shape[3]:
            raise DimensionError(f"conv2d weight must be [Cout,Cin,k,k], got {w.shape}", axis="kernel")
        B, C, H, W = x.shape
        Cout, Cin, k, _ = w.shape
        if C != Cin:
            raise DimensionError(f"input has {C} channels, weight expects {Cin}", axis="channel")
        if b.shape != (Cout,):
            raise DimensionError(f"bias shape {b.shape} != ({Cout},)", axis="channel")
        Ho = _out_size(H, k, stride, padding, "height")
        Wo = _out_size(W, k, stride, padding, "width")
        xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x
        win = sliding_window_view(xp, (k, k), axis=(2, 3))
        win = win[:, :, : (Ho - 1) * stride + 1: stride, : (Wo - 1) * stride + 1: stride]
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(B * Ho * Wo, C * k * k)
        wmat = w.reshape(Cout, -1)
        out = cols @ wmat.T + b
        self.cols, self.w = cols, w
        self.geom = (B, C, H, W, Ho, Wo, k, stride, padding, xp.shape)
        return np.ascontiguousarray(out.reshape(B, Ho, Wo, Cout).transpose(0, 3, 1, 2))

    def backward(self, g):
        B, C, H, W, Ho, Wo, k, s, p, padded = self.geom
        Cout = self.w.shape[0]
        gm = g.transpose(0, 2, 3, 1).reshape(-1, Cout)
        dw = (gm.T @ self.cols).reshape(self.w.shape)
        db = gm.sum(axis=0)
        dcols = (gm @ self.w.reshape(Cout, -1)).reshape(B, Ho, Wo, C, k, k)
        dxp = np.zeros(padded, dtype=g.dtype)
        for i in range(k):
            for j in range(k):
                dxp[:, :, i: i + (Ho - 1) * s + 1: s, j: j + (Wo - 1) * s + 1: s] += \
                    dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        dx = dxp[:, :, p: p + H, p: p + W] if p else dxp
        return dx, dw, db


class ConvTranspose2d(Function):
    """Adjoint of the strided, unpadded ``Conv2d`` sharing the same weight."""

    name = "conv_transpose2d"

    def forward(self, x, w, b, stride=2):
        if x.ndim != 4:
            raise DimensionError(f"conv_transpose2d input must be 4-D, got shape {x.shape}", axis="rank")
        if w.ndim != 4 or w.shape[2] != w.shape[3]:
            raise DimensionError(f"conv_transpose2d weight must be [Cin,Cout,k,k], got {w.shape}", axis="kernel")
        B, C, H, W = x.shape
        Cin, Cout, k, _ = w.shape
        if C != Cin:
            raise DimensionError(f"input has {C} channels, weight expects {Cin}", axis="channel")
        if b.shape != (Cout,):
            raise DimensionError(f"bias shape {b.shape} != ({Cout},)", axis="channel")
        s = stride
        Ho, Wo = (H - 1) * s + k, (W - 1) * s + k
        xm = x.transpose(0, 2, 3, 1).reshape(-1, Cin)
        cols = (xm @ w.reshape(Cin, -1)).reshape(B, H, W, Cout, k, k)
        out = np.zeros((B, Cout, Ho, Wo), dtype=x.dtype)
        for i in range(k):
            for j in range(k):
                out[:, :, i: i + (H - 1) * s + 1: s, j: j + (W - 1) * s + 1: s] += \
                    cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        out += b[None, :, None, None]
        self.xm, self.w, self.geom = xm, w, (B, C, H, W, k, s)
        return out

    def backward(self, g):
        B, C, H, W, k, s = self.geom
        Cout = self.w.shape[1]
        gcols = np.empty((B, H, W, Cout, k, k), dtype=g.dtype)
        for i in range(k):
            for j in range(k):
                gcols[:, :, :, :, i, j] = \
                    g[:, :, i: i + (H - 1) * s + 1: s, j: j + (W - 1) * s + 1: s].transpose(0, 2, 3, 1)
        gcm = gcols.reshape(B * H * W, Cout * k * k)
        dx = (gcm @ self.w.reshape(C, -1).T).reshape(B, H, W, C).transpose(0, 3, 1, 2)
        dw = (self.xm.T @ gcm).reshape(self.w.shape)
        db = g.sum(axis=(0, 2, 3))
        return dx, dw, db


class GroupNorm(Function):
    name = "group_norm"

    def forward(self, x, gamma, beta, groups=8, eps=1e-6):
        if x.ndim != 4:
            raise DimensionError(f"group_norm input must be 4-D, got shape {x.shape}", axis="rank")
        B, C, H, W = x.shape
        if C % groups:
            raise ConfigurationError(f"group_norm: {C} channels not divisible by {groups} groups")
        if eps <= 0:
            raise ConfigurationError(f"group_norm: eps must be > 0, got {eps}")
        xg = x.reshape(B, groups, -1)
        mean = xg.mean(axis=-1, keepdims=True, dtype=np.float64)
        centered = xg - mean
        var = (centered * centered).mean(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = (centered * inv).astype(x.dtype)
        self.xhat, self.inv, self.gamma, self.groups = xhat, inv, gamma, groups
        out = xhat.reshape(x.shape) * gamma[None, :, None, None] + beta[None, :, None, None]
        return out.astype(x.dtype)

    def backward(self, g):
        B, C = g.shape[:2]
        xhat = self.xhat.reshape(g.shape)
        dgamma = (g * xhat).sum(axis=(0, 2, 3))
        dbeta = g.sum(axis=(0, 2, 3))
        dxhat = (g * self.gamma[None, :, None, None]).reshape(B, self.groups, -1)
        xh = self.xhat
        dx = self.inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                         - xh * (dxhat * xh).mean(axis=-1, keepdims=True))
        return dx.reshape(g.shape).astype(g.dtype), dgamma, dbeta


class Gelu(Function):
    """Exact form x * Phi(x)."""

    name = "gelu"

    def forward(self, x):
        self.x = x
        self.cdf = 0.5 * (1.0 + erf(x / _SQRT2))
        return (x * self.cdf).astype(x.dtype)

    def backward(self, g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * self.x * self.x)
        return (g * (self.cdf + self.x * pdf),)


class Relu(Function):
    name = "relu"

    def forward(self, x):
        self.mask = x > 0
        return np.where(self.mask, x, 0).astype(x.dtype)

    def backward(self, g):
        return (g * self.mask,)


class Linear(Function):
    name = "linear"

    def forward(self, x, w, b):
        if x.ndim != 2 or w.ndim != 2:
            raise DimensionError(f"linear expects x[N,Din], W[Dout,Din]; got {x.shape}, {w.shape}", axis="rank")
        if x.shape[1] != w.shape[1]:
            raise DimensionError(f"linear: x has {x.shape[1]} features, W expects {w.shape[1]}", axis="Din")
        if b.shape != (w.shape[0],):
            raise DimensionError(f"linear: bias shape {b.shape} != ({w.shape[0]},)", axis="Dout")
        self.x, self.w = x, w
        return x @ w.T + b

    def backward(self, g):
        return g @ self.w, g.T @ self.x, g.sum(axis=0)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    return Conv2d.apply(x, weight, bias, stride=stride, padding=padding)


def conv_transpose2d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 2) -> Tensor:
    return ConvTranspose2d.apply(x, weight, bias, stride=stride)


def group_norm(x: Tensor, groups: int, gamma: Tensor, beta: Tensor, eps: float = 1e-6) -> Tensor:
    return GroupNorm.apply(x, gamma, beta, groups=groups, eps=eps)


def activation(x: Tensor, kind: Literal["gelu", "relu"]) -> Tensor:
    if kind == "gelu":
        return Gelu.apply(x)
    if kind == "relu":
        return Relu.apply(x)
    raise ConfigurationError(f"unknown activation {kind!r}")


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    return Linear.apply(x, weight, bias)


def self_attention(x: Tensor, heads: int, wq: Tensor, wk: Tensor, wv: Tensor, wo: Tensor) -> Tensor:
    """Spatial multi-head self-attention with the residual skip: x + Wo·attn(x)."""
    if x.ndim != 4:
        raise DimensionError(f"self_attention input must be 4-D, got shape {x.shape}", axis="rank")
    B, C, H, W = x.shape
    if C % heads:
        raise ConfigurationError(f"self_attention: {C} channels not divisible by {heads} heads")
    for name, w in (("Wq", wq), ("Wk", wk), ("Wv", wv), ("Wo", wo)):
        if w.shape != (C, C):
            raise DimensionError(f"{name} shape {w.shape} != ({C}, {C})", axis="channel")
    n, d = H * W, C // heads
    seq = ops.reshape(x, (B, C, n))
    q = ops.transpose(ops.reshape(ops.matmul(wq, seq), (B, heads, d, n)), (0, 1, 3, 2))
    k = ops.reshape(ops.matmul(wk, seq), (B, heads, d, n))
    v = ops.transpose(ops.reshape(ops.matmul(wv, seq), (B, heads, d, n)), (0, 1, 3, 2))
    scores = ops.mul(ops.matmul(q, k), 1.0 / math.sqrt(d))
    ctx = ops.matmul(ops.softmax(scores, axis=-1), v)
    ctx = ops.reshape(ops.transpose(ctx, (0, 1, 3, 2)), (B, C, n))
    out = ops.reshape(ops.matmul(wo, ctx), (B, C, H, W))
    return ops.add(x, out)


def dropout(x: Tensor, p: float, training: bool, rng: RngState) -> Tensor:
    if not 0.0 <= p < 1.0:
        raise ConfigurationError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    keep = rng.generator.random(x.shape) >= p
    mask = keep.astype(x.dtype) / np.asarray(1.0 - p, dtype=x.dtype)
    return ops.mul(x, Tensor(mask, dtype=x.dtype))
