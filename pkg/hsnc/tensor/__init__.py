"""Minimal dense-tensor engine with reverse-mode differentiation."""

from .core import Function, Graph, Node, Tensor, backward, current_graph, tensor
from .gradcheck import GradReport, check_gradients, grad_check, gradient_report, registered_ops
from .layers import (
    activation,
    conv2d,
    conv_transpose2d,
    dropout,
    group_norm,
    linear,
    self_attention,
)
from .rng import RngState

__all__ = [
    "Function", "Graph", "Node", "Tensor", "backward", "current_graph", "tensor",
    "GradReport", "check_gradients", "grad_check", "gradient_report", "registered_ops",
    "activation", "conv2d", "conv_transpose2d", "dropout", "group_norm", "linear", "self_attention",
    "RngState",
]
