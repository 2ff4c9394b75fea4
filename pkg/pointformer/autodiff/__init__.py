"""Reverse-mode automatic differentiation over dense numpy tensors."""

from pointformer.autodiff.gradcheck import GradCheckReport, finite_diff_check
from pointformer.autodiff.ops import forward_op, registered_kinds
from pointformer.autodiff.tensor import (
    Graph,
    Node,
    Tensor,
    backward,
    default_dtype,
    using_dtype,
    zero_grad,
)

__all__ = [
    "GradCheckReport",
    "Graph",
    "Node",
    "Tensor",
    "backward",
    "default_dtype",
    "finite_diff_check",
    "forward_op",
    "registered_kinds",
    "using_dtype",
    "zero_grad",
]
