"""Dense tensors and the tape that records them for reverse-mode differentiation.

Ops run eagerly on numpy arrays. While a :class:`Graph` is active (``with
Graph() as g:``) every op whose inputs require gradients appends a
:class:`Node` to it; :func:`backward` then walks the nodes in exact reverse
insertion order. Outside a graph nothing is recorded, which is how evaluation
runs.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Any, Callable, List, Optional, Sequence, Tuple

import numpy as np

from ..config import settings
from ..errors import NonFiniteError, UsageError

logger = logging.getLogger(__name__)

_ids = itertools.count()
_graph_stack: List["Graph"] = []

DEFAULT_DTYPE = np.float32


def _as_float_array(data: Any, dtype: Optional[np.dtype]) -> np.ndarray:
    if dtype is not None:
        return np.asarray(data, dtype=dtype)
    arr = np.asarray(data)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(DEFAULT_DTYPE)
    return arr


class Tensor:
    def __init__(self, data: Any, requires_grad: bool = False, dtype: Optional[np.dtype] = None):
        self.data: np.ndarray = _as_float_array(data, dtype)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.id = next(_ids)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.data.dtype)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    # arithmetic sugar; implementations live in ops.py
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(ops.as_tensor(other, like=self), self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from . import ops
        return ops.div(ops.as_tensor(other, like=self), self)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def sum(self, axis=None, keepdims: bool = False):
        from . import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        from . import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes):
        from . import ops
        return ops.transpose(self, axes)

    def exp(self):
        from . import ops
        return ops.exp(self)

    def log(self):
        from . import ops
        return ops.log(self)

    def abs(self):
        from . import ops
        return ops.abs(self)

    def square(self):
        from . import ops
        return ops.square(self)


def tensor(data: Any, requires_grad: bool = False, dtype: Optional[np.dtype] = DEFAULT_DTYPE) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, dtype=dtype)


@dataclass
class Node:
    op: str
    inputs: Tuple[int, ...]
    output: int
    input_tensors: Tuple[Tensor, ...]
    backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Graph:
    """Ordered op records; insertion order is a valid topological order."""

    def __init__(self) -> None:
        self.nodes: List[Node] = []

    def __enter__(self) -> "Graph":
        _graph_stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _graph_stack.pop()

    def record(self, node: Node) -> None:
        self.nodes.append(node)

    def clear(self) -> None:
        self.nodes.clear()

    def backward(self, loss: Tensor) -> None:
        backward(self, loss)

    def __len__(self) -> int:
        return len(self.nodes)


def current_graph() -> Optional[Graph]:
    return _graph_stack[-1] if _graph_stack else None


class Function:
    """Base class for differentiable ops.

    Subclasses implement ``forward`` on raw arrays (saving what they need on
    ``self``) and ``backward`` returning one gradient array, or None, per input.
    """

    name = "op"

    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        raise NotImplementedError

    @classmethod
    def apply(cls, *tensors: Tensor, **kwargs: Any) -> Tensor:
        fn = cls()
        out_data = fn.forward(*(t.data for t in tensors), **kwargs)
        if settings.check_finite:
            _check_finite(cls.name, tensors, out_data)
        graph = current_graph()
        track = graph is not None and any(t.requires_grad for t in tensors)
        out = Tensor(out_data, requires_grad=track, dtype=out_data.dtype)
        if track:
            graph.record(Node(
                op=cls.name,
                inputs=tuple(t.id for t in tensors),
                output=out.id,
                input_tensors=tensors,
                backward=fn.backward,
            ))
        return out


def _check_finite(name: str, inputs: Sequence[Tensor], out: np.ndarray) -> None:
    if all(np.isfinite(t.data).all() for t in inputs) and not np.isfinite(out).all():
        raise NonFiniteError(f"{name} produced non-finite values from finite inputs")


def backward(graph: Graph, loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every requires_grad leaf.

    Repeated calls add to existing ``.grad`` buffers; callers reset them.
    """
    if loss.size != 1:
        raise UsageError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads = {loss.id: np.ones_like(loss.data)}
    seen = {loss.id: loss}
    for node in reversed(graph.nodes):
        g = grads.pop(node.output, None)
        if g is None:
            continue
        for t, gi in zip(node.input_tensors, node.backward(g)):
            if gi is None or not t.requires_grad:
                continue
            gi = np.asarray(gi, dtype=t.data.dtype).reshape(t.shape)
            if t.id in grads:
                grads[t.id] = grads[t.id] + gi
            else:
                grads[t.id] = gi
                seen[t.id] = t
    # whatever is left was never produced inside the graph: leaves
    for tid, g in grads.items():
        leaf = seen[tid]
        if not leaf.requires_grad:
            continue
        leaf.grad = g.copy() if leaf.grad is None else leaf.grad + g
