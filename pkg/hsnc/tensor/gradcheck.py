"""Central finite-difference checks for every differentiable op.

Checks run in binary32 by default. The projected scalar is accumulated in
float64 and each step is measured from the perturbed value actually stored,
so only the op's own rounding reaches the numeric derivative.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import UsageError
from . import layers, ops
from .core import Graph, Tensor, backward
from .rng import RngState

Shape = Tuple[int, ...]

# relative error is measured against max(|numeric|, REL_FLOOR * max|analytic| of that input)
REL_FLOOR = 0.1


@dataclass
class GradCase:
    fn: Callable[..., Tensor]
    inputs: List[np.ndarray]
    # only these input positions are perturbed (defaults to all)
    check: Optional[List[int]] = field(default=None)
    dtype: Optional[type] = None


@dataclass
class GradReport:
    max_rel: float
    max_abs: float


_REGISTRY: Dict[str, Callable[[Optional[Sequence[Shape]], np.random.Generator, float], GradCase]] = {}


def register(name: str):
    def deco(builder):
        _REGISTRY[name] = builder
        return builder
    return deco


def registered_ops() -> List[str]:
    return sorted(_REGISTRY)


def _away_from(rng: np.random.Generator, shape: Shape, margin: float) -> np.ndarray:
    x = rng.standard_normal(shape)
    return np.where(np.abs(x) < margin, np.sign(x + 1e-12) * (margin + np.abs(x)), x)


def _shapes(trial: Optional[Sequence[Shape]], default: Sequence[Shape]) -> List[Shape]:
    return [tuple(s) for s in (trial or default)]


def gradient_report(
    fn: Callable[..., Tensor],
    inputs: Sequence[np.ndarray],
    eps: float = 1e-3,
    rng: Optional[np.random.Generator] = None,
    n_coords: int = 24,
    check: Optional[Sequence[int]] = None,
    dtype: type = np.float32,
) -> GradReport:
    """Compare backward() with central differences on sampled coordinates.

    ``fn`` maps Tensors to a Tensor; it is reduced to a scalar with a fixed
    random projection so every output element participates.
    """
    rng = rng or np.random.default_rng(0)
    arrays = [np.array(a, dtype=dtype) for a in inputs]
    first = fn(*[Tensor(a, dtype=dtype) for a in arrays])
    proj = rng.standard_normal(first.shape) if first.size > 1 else np.ones(first.shape)
    # exactly representable in the working dtype, so both sides use the same weights
    proj = proj.astype(dtype).astype(np.float64)

    def scalar(arrs: Sequence[np.ndarray]) -> float:
        out = fn(*[Tensor(a, dtype=dtype) for a in arrs])
        return float(np.sum(out.data.astype(np.float64) * proj))

    leaves = [Tensor(a, requires_grad=True, dtype=dtype) for a in arrays]
    with Graph() as graph:
        out = fn(*leaves)
        loss = ops.sum(ops.mul(out, Tensor(proj, dtype=dtype)))
    backward(graph, loss)

    worst_rel = worst_abs = 0.0
    positions = range(len(arrays)) if check is None else check
    for i in positions:
        grad = leaves[i].grad if leaves[i].grad is not None else np.zeros_like(arrays[i])
        analytic = grad.astype(np.float64).reshape(-1)
        floor = max(1e-6, REL_FLOOR * float(np.max(np.abs(analytic), initial=0.0)))
        flat = arrays[i].reshape(-1)
        picks = np.arange(flat.size) if flat.size <= n_coords else rng.choice(flat.size, n_coords, replace=False)
        for idx in picks:
            orig = flat[idx]
            flat[idx] = orig + eps
            hi = float(flat[idx])
            up = scalar(arrays)
            flat[idx] = orig - eps
            lo = float(flat[idx])
            down = scalar(arrays)
            flat[idx] = orig
            numeric = (up - down) / (hi - lo)
            diff = abs(analytic[idx] - numeric)
            worst_abs = max(worst_abs, diff)
            worst_rel = max(worst_rel, diff / max(abs(numeric), floor))
    return GradReport(worst_rel, worst_abs)


def check_gradients(
    fn: Callable[..., Tensor],
    inputs: Sequence[np.ndarray],
    eps: float = 1e-3,
    rng: Optional[np.random.Generator] = None,
    n_coords: int = 24,
    check: Optional[Sequence[int]] = None,
    dtype: type = np.float32,
) -> float:
    """Max relative error of :func:`gradient_report`."""
    return gradient_report(fn, inputs, eps, rng, n_coords, check, dtype).max_rel


def grad_check(opname: str, trial_shapes: Optional[Sequence[Shape]] = None,
               eps: float = 1e-3, seed: int = 0, n_coords: int = 24,
               dtype: Optional[type] = None) -> float:
    """Check one registered op; ``dtype`` overrides the case's own precision."""
    if opname not in _REGISTRY:
        raise UsageError(f"grad_check: unknown op {opname!r}; known: {', '.join(registered_ops())}")
    rng = np.random.default_rng(seed)
    case = _REGISTRY[opname](trial_shapes, rng, eps)
    work = dtype or case.dtype or np.float32
    return check_gradients(case.fn, case.inputs, eps=eps, rng=rng, n_coords=n_coords, check=case.check, dtype=work)


@register("linear")
def _linear(trial, rng, eps):
    sx, sw, sb = _shapes(trial, [(3, 4), (2, 4), (2,)])
    return GradCase(layers.linear, [rng.standard_normal(s) for s in (sx, sw, sb)])


@register("relu")
def _relu(trial, rng, eps):
    (sx,) = _shapes(trial, [(4, 5)])
    return GradCase(lambda x: layers.activation(x, "relu"), [_away_from(rng, sx, 0.1)])


@register("gelu")
def _gelu(trial, rng, eps):
    (sx,) = _shapes(trial, [(4, 5)])
    return GradCase(lambda x: layers.activation(x, "gelu"), [rng.standard_normal(sx) * 2.0])


@register("conv2d")
def _conv2d(trial, rng, eps):
    sx, sw, sb = _shapes(trial, [(1, 3, 5, 5), (4, 3, 3, 3), (4,)])
    return GradCase(lambda x, w, b: layers.conv2d(x, w, b, stride=2, padding=1),
                    [rng.standard_normal(s) for s in (sx, sw, sb)])


@register("conv_transpose2d")
def _conv_transpose2d(trial, rng, eps):
    sx, sw, sb = _shapes(trial, [(2, 3, 3, 3), (3, 2, 2, 2), (2,)])
    return GradCase(lambda x, w, b: layers.conv_transpose2d(x, w, b, stride=2),
                    [rng.standard_normal(s) for s in (sx, sw, sb)])


@register("group_norm")
def _group_norm(trial, rng, eps):
    sx, sg, sb = _shapes(trial, [(2, 8, 3, 3), (8,), (8,)])
    return GradCase(lambda x, g, b: layers.group_norm(x, 2, g, b, eps=1e-6),
                    [rng.standard_normal(sx), 1.0 + 0.1 * rng.standard_normal(sg), rng.standard_normal(sb)])


@register("self_attention")
def _self_attention(trial, rng, eps):
    sx, sw = _shapes(trial, [(1, 8, 2, 2), (8, 8)])
    ws = [rng.standard_normal(sw) / np.sqrt(sw[0]) for _ in range(4)]
    # every output goes through one softmax over all positions; binary32 noise there exceeds 1e-3
    return GradCase(lambda x, q, k, v, o: layers.self_attention(x, 2, q, k, v, o),
                    [rng.standard_normal(sx)] + ws, dtype=np.float64)


@register("dropout")
def _dropout(trial, rng, eps):
    (sx,) = _shapes(trial, [(6, 5)])
    return GradCase(lambda x: layers.dropout(x, 0.3, True, RngState(7)), [rng.standard_normal(sx)])


@register("softmax")
def _softmax(trial, rng, eps):
    (sx,) = _shapes(trial, [(3, 5)])
    return GradCase(lambda x: ops.softmax(x, axis=-1), [rng.standard_normal(sx)])


@register("matmul")
def _matmul(trial, rng, eps):
    sa, sb = _shapes(trial, [(2, 3, 4), (4, 5)])
    return GradCase(ops.matmul, [rng.standard_normal(sa), rng.standard_normal(sb)])


@register("add")
def _add(trial, rng, eps):
    sa, sb = _shapes(trial, [(3, 4), (1, 4)])
    return GradCase(ops.add, [rng.standard_normal(sa), rng.standard_normal(sb)])


@register("sub")
def _sub(trial, rng, eps):
    sa, sb = _shapes(trial, [(3, 4), (3, 1)])
    return GradCase(ops.sub, [rng.standard_normal(sa), rng.standard_normal(sb)])


@register("mul")
def _mul(trial, rng, eps):
    sa, sb = _shapes(trial, [(3, 4), (3, 4)])
    return GradCase(ops.mul, [rng.standard_normal(sa), rng.standard_normal(sb)])


@register("div")
def _div(trial, rng, eps):
    sa, sb = _shapes(trial, [(3, 4), (3, 4)])
    return GradCase(ops.div, [rng.standard_normal(sa), 1.0 + rng.uniform(0.0, 1.0, sb)])


@register("neg")
def _neg(trial, rng, eps):
    (sx,) = _shapes(trial, [(3, 4)])
    return GradCase(ops.neg, [rng.standard_normal(sx)])


@register("exp")
def _exp(trial, rng, eps):
    (sx,) = _shapes(trial, [(3, 4)])
    return GradCase(ops.exp, [rng.standard_normal(sx)])


@register("log")
def _log(trial, rng, eps):
    (sx,) = _shapes(trial, [(3, 4)])
    return GradCase(ops.log, [rng.uniform(0.5, 3.0, sx)])


@register("abs")
def _abs(trial, rng, eps):
    (sx,) = _shapes(trial, [(3, 4)])
    return GradCase(ops.abs, [_away_from(rng, sx, 0.1)])


@register("square")
def _square(trial, rng, eps):
    (sx,) = _shapes(trial, [(3, 4)])
    return GradCase(ops.square, [rng.standard_normal(sx)])


@register("sum")
def _sum(trial, rng, eps):
    (sx,) = _shapes(trial, [(2, 3, 4)])
    return GradCase(lambda x: ops.sum(x, axis=(0, 2)), [rng.standard_normal(sx)])


@register("mean")
def _mean(trial, rng, eps):
    (sx,) = _shapes(trial, [(2, 3, 4)])
    return GradCase(lambda x: ops.mean(x, axis=1, keepdims=True), [rng.standard_normal(sx)])


@register("reshape")
def _reshape(trial, rng, eps):
    (sx,) = _shapes(trial, [(2, 3, 4)])
    return GradCase(lambda x: ops.reshape(x, (x.size,)), [rng.standard_normal(sx)])


@register("transpose")
def _transpose(trial, rng, eps):
    (sx,) = _shapes(trial, [(2, 3, 4)])
    return GradCase(lambda x: ops.transpose(x, (2, 0, 1)), [rng.standard_normal(sx)])


@register("clamp")
def _clamp(trial, rng, eps):
    (sx,) = _shapes(trial, [(4, 6)])
    x = rng.uniform(-3.0, 3.0, sx)
    # keep samples off the clamp bounds at +-1
    x = np.where(np.abs(np.abs(x) - 1.0) < 0.1, x * 1.25, x)
    return GradCase(lambda t: ops.clamp(t, -1.0, 1.0), [x])


@register("slice")
def _slice(trial, rng, eps):
    (sx,) = _shapes(trial, [(2, 6, 3)])
    return GradCase(lambda x: ops.slice_axis(x, 1, 2, 5), [rng.standard_normal(sx)])
