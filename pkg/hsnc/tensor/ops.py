"""Elementwise and structural primitives."""
from __future__ import annotations

from typing import Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import DimensionError
from .core import Function, Tensor

Scalar = Union[int, float]


def as_tensor(x: Union[Tensor, Scalar, np.ndarray], like: Optional[Tensor] = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(x, dtype=dtype)


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for dim, size in enumerate(shape):
        if size == 1 and grad.shape[dim] != 1:
            grad = grad.sum(axis=dim, keepdims=True)
    return grad


class Add(Function):
    name = "add"

    def forward(self, a, b):
        self.shapes = (a.shape, b.shape)
        return a + b

    def backward(self, g):
        return unbroadcast(g, self.shapes[0]), unbroadcast(g, self.shapes[1])


class Sub(Function):
    name = "sub"

    def forward(self, a, b):
        self.shapes = (a.shape, b.shape)
        return a - b

    def backward(self, g):
        return unbroadcast(g, self.shapes[0]), unbroadcast(-g, self.shapes[1])


class Mul(Function):
    name = "mul"

    def forward(self, a, b):
        self.a, self.b = a, b
        return a * b

    def backward(self, g):
        return unbroadcast(g * self.b, self.a.shape), unbroadcast(g * self.a, self.b.shape)


class Div(Function):
    name = "div"

    def forward(self, a, b):
        self.a, self.b = a, b
        return a / b

    def backward(self, g):
        da = g / self.b
        db = -g * self.a / (self.b * self.b)
        return unbroadcast(da, self.a.shape), unbroadcast(db, self.b.shape)


class Neg(Function):
    name = "neg"

    def forward(self, a):
        return -a

    def backward(self, g):
        return (-g,)


class Exp(Function):
    name = "exp"

    def forward(self, a):
        self.out = np.exp(a)
        return self.out

    def backward(self, g):
        return (g * self.out,)


class Log(Function):
    name = "log"

    def forward(self, a):
        self.a = a
        return np.log(a)

    def backward(self, g):
        return (g / self.a,)


class Abs(Function):
    name = "abs"

    def forward(self, a):
        self.sign = np.sign(a)
        return np.abs(a)

    def backward(self, g):
        return (g * self.sign,)


class Square(Function):
    name = "square"

    def forward(self, a):
        self.a = a
        return a * a

    def backward(self, g):
        return (2.0 * g * self.a,)


class Sum(Function):
    name = "sum"

    def forward(self, a, axis=None, keepdims=False):
        self.shape, self.axis, self.keepdims = a.shape, axis, keepdims
        return np.asarray(a.sum(axis=axis, keepdims=keepdims), dtype=a.dtype)

    def backward(self, g):
        if self.axis is not None and not self.keepdims:
            g = np.expand_dims(g, self.axis)
        return (np.broadcast_to(g, self.shape).copy(),)


class Mean(Function):
    name = "mean"

    def forward(self, a, axis=None, keepdims=False):
        self.shape, self.axis, self.keepdims = a.shape, axis, keepdims
        self.count = a.size if axis is None else int(np.prod([a.shape[i] for i in np.atleast_1d(axis)]))
        return np.asarray(a.mean(axis=axis, keepdims=keepdims), dtype=a.dtype)

    def backward(self, g):
        if self.axis is not None and not self.keepdims:
            g = np.expand_dims(g, self.axis)
        return (np.broadcast_to(g / self.count, self.shape).copy(),)


class Reshape(Function):
    name = "reshape"

    def forward(self, a, shape=()):
        self.shape = a.shape
        return a.reshape(shape)

    def backward(self, g):
        return (g.reshape(self.shape),)


class Transpose(Function):
    name = "transpose"

    def forward(self, a, axes=None):
        self.axes = axes
        return np.ascontiguousarray(np.transpose(a, axes))

    def backward(self, g):
        if self.axes is None:
            return (np.transpose(g),)
        return (np.transpose(g, np.argsort(self.axes)),)


class MatMul(Function):
    name = "matmul"

    def forward(self, a, b):
        if a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
            raise DimensionError(f"matmul inner dims {a.shape} @ {b.shape} disagree", axis="inner")
        self.a, self.b = a, b
        return np.matmul(a, b)

    def backward(self, g):
        da = np.matmul(g, np.swapaxes(self.b, -1, -2))
        db = np.matmul(np.swapaxes(self.a, -1, -2), g)
        return unbroadcast(da, self.a.shape), unbroadcast(db, self.b.shape)


class Softmax(Function):
    name = "softmax"

    def forward(self, a, axis=-1):
        self.axis = axis
        e = np.exp(a - a.max(axis=axis, keepdims=True))
        self.out = e / e.sum(axis=axis, keepdims=True)
        return self.out

    def backward(self, g):
        s = self.out
        return (s * (g - (g * s).sum(axis=self.axis, keepdims=True)),)


class Clamp(Function):
    name = "clamp"

    def forward(self, a, lo=None, hi=None):
        self.mask = np.ones_like(a)
        if lo is not None:
            self.mask = self.mask * (a >= lo)
        if hi is not None:
            self.mask = self.mask * (a <= hi)
        return np.clip(a, lo, hi)

    def backward(self, g):
        return (g * self.mask,)


class SliceAxis(Function):
    name = "slice"

    def forward(self, a, axis=1, start=0, stop=None):
        self.shape, self.axis = a.shape, axis
        idx = [slice(None)] * a.ndim
        idx[axis] = slice(start, stop)
        self.idx = tuple(idx)
        return np.ascontiguousarray(a[self.idx])

    def backward(self, g):
        out = np.zeros(self.shape, dtype=g.dtype)
        out[self.idx] = g
        return (out,)


def add(a, b) -> Tensor:
    a = as_tensor(a)
    return Add.apply(a, as_tensor(b, like=a))


def sub(a, b) -> Tensor:
    a = as_tensor(a)
    return Sub.apply(a, as_tensor(b, like=a))


def mul(a, b) -> Tensor:
    a = as_tensor(a)
    return Mul.apply(a, as_tensor(b, like=a))


def div(a, b) -> Tensor:
    a = as_tensor(a)
    return Div.apply(a, as_tensor(b, like=a))


def neg(a: Tensor) -> Tensor:
    return Neg.apply(a)


def exp(a: Tensor) -> Tensor:
    return Exp.apply(a)


def log(a: Tensor) -> Tensor:
    return Log.apply(a)


def abs(a: Tensor) -> Tensor:  # noqa: A001
    return Abs.apply(a)


def square(a: Tensor) -> Tensor:
    return Square.apply(a)


def sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    return Sum.apply(a, axis=axis, keepdims=keepdims)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    return Mean.apply(a, axis=axis, keepdims=keepdims)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    return Reshape.apply(a, shape=tuple(shape))


def transpose(a: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    return Transpose.apply(a, axes=tuple(axes) if axes else None)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return MatMul.apply(a, b)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    return Softmax.apply(a, axis=axis)


def clamp(a: Tensor, lo: Optional[float] = None, hi: Optional[float] = None) -> Tensor:
    return Clamp.apply(a, lo=lo, hi=hi)


def slice_axis(a: Tensor, axis: int, start: int, stop: Optional[int]) -> Tensor:
    return SliceAxis.apply(a, axis=axis, start=start, stop=stop)


def split_channels(a: Tensor, n: int) -> Tuple[Tensor, Tensor]:
    """Split axis 1 into ``[:n]`` and ``[n:]``."""
    return slice_axis(a, 1, 0, n), slice_axis(a, 1, n, None)
